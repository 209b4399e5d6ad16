#include "kernelsmith/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"

namespace ks {
namespace {

constexpr int kIdBits = 21;
constexpr std::uint64_t kIdMask = (std::uint64_t{1} << kIdBits) - 1;
constexpr double kArpaZero = -99.0;

std::uint64_t pack3(TokenId u, TokenId v, TokenId w) {
  return (static_cast<std::uint64_t>(u) << (2 * kIdBits)) |
         (static_cast<std::uint64_t>(v) << kIdBits) | static_cast<std::uint64_t>(w);
}

// D = n1 / (n1 + 2 n2) from the count-of-counts of one order.
template <typename Map>
double kn_discount(const Map& counts) {
  double n1 = 0.0;
  double n2 = 0.0;
  for (const auto& [key, c] : counts) {
    if (c == 1) n1 += 1.0;
    else if (c == 2) n2 += 1.0;
  }
  if (n1 <= 0.0) return 0.5;
  return n1 / (n1 + 2.0 * n2);
}

double sum_entries(const TrigramLM::Context& ctx) {
  double s = 0.0;
  for (const auto& e : ctx.entries) s += e.prob;
  return s;
}

double recompute_backoff(double seen_mass, double lower_seen_mass) {
  const double numerator = 1.0 - seen_mass;
  const double denominator = 1.0 - lower_seen_mass;
  if (denominator <= 1e-12) return 1.0;
  const double bow = numerator / denominator;
  return bow > 0.0 ? bow : 1e-12;
}

// Relative-entropy cost of dropping one explicit n-gram from a context,
// weighted by the history probability.
double pruning_cost(double history_weight, double p, double p_lower, double seen_mass,
                    double lower_seen_mass, double backoff) {
  const double new_backoff = (1.0 - seen_mass + p) / (1.0 - lower_seen_mass + p_lower);
  double cost = p * (std::log(p) - std::log(new_backoff * p_lower));
  const double backed_off_mass = 1.0 - seen_mass;
  if (backed_off_mass > 0.0) {
    cost += backed_off_mass * (std::log(backoff) - std::log(new_backoff));
  }
  return history_weight * cost;
}

}  // namespace

std::uint64_t TrigramLM::pack(TokenId u, TokenId v) {
  return (static_cast<std::uint64_t>(u) << kIdBits) | static_cast<std::uint64_t>(v);
}

std::pair<TokenId, TokenId> TrigramLM::unpack(std::uint64_t key) {
  return {static_cast<TokenId>(key >> kIdBits), static_cast<TokenId>(key & kIdMask)};
}

double TrigramLM::lookup(const Context& ctx, TokenId w, bool* found) {
  auto it = std::lower_bound(ctx.entries.begin(), ctx.entries.end(), w,
                             [](const Entry& e, TokenId id) { return e.word < id; });
  if (it != ctx.entries.end() && it->word == w) {
    *found = true;
    return it->prob;
  }
  *found = false;
  return 0.0;
}

double TrigramLM::bigram_prob(TokenId v, TokenId w) const {
  auto it = bigrams_.find(v);
  if (it == bigrams_.end()) return unigram_[static_cast<std::size_t>(w)];
  bool found = false;
  const double p = lookup(it->second, w, &found);
  return found ? p : it->second.backoff * unigram_[static_cast<std::size_t>(w)];
}

double TrigramLM::prob(TokenId u, TokenId v, TokenId w) const {
  auto it = trigrams_.find(pack(u, v));
  if (it == trigrams_.end()) return bigram_prob(v, w);
  bool found = false;
  const double p = lookup(it->second, w, &found);
  return found ? p : it->second.backoff * bigram_prob(v, w);
}

double TrigramLM::log_prob(TokenId u, TokenId v, TokenId w) const {
  return std::log(prob(u, v, w));
}

std::vector<double> TrigramLM::distribution(TokenId u, TokenId v) const {
  std::vector<double> p = unigram_;
  if (auto it = bigrams_.find(v); it != bigrams_.end()) {
    for (double& x : p) x *= it->second.backoff;
    for (const auto& e : it->second.entries) p[static_cast<std::size_t>(e.word)] = e.prob;
  }
  if (auto it = trigrams_.find(pack(u, v)); it != trigrams_.end()) {
    for (double& x : p) x *= it->second.backoff;
    for (const auto& e : it->second.entries) p[static_cast<std::size_t>(e.word)] = e.prob;
  }
  return p;
}

double TrigramLM::bigram_backoff(TokenId v) const {
  auto it = bigrams_.find(v);
  return it == bigrams_.end() ? 1.0 : it->second.backoff;
}

double TrigramLM::trigram_backoff(TokenId u, TokenId v) const {
  auto it = trigrams_.find(pack(u, v));
  return it == trigrams_.end() ? 1.0 : it->second.backoff;
}

std::size_t TrigramLM::num_ngrams(int order) const {
  std::size_t n = 0;
  switch (order) {
    case 1:
      return event_count();
    case 2:
      for (const auto& [v, ctx] : bigrams_) n += ctx.entries.size();
      return n;
    case 3:
      for (const auto& [k, ctx] : trigrams_) n += ctx.entries.size();
      return n;
    default:
      throw Error(ErrorCode::kInvalidArgument, "order must be 1, 2 or 3");
  }
}

std::size_t TrigramLM::event_count() const {
  return vocab_.size() - 2;  // everything but <pad> and <s>
}

TrigramLM build_lm(const std::vector<Sentence>& corpus, const Vocab& vocab,
                   double prune_threshold) {
  if (prune_threshold < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "prune threshold must be nonnegative");
  }
  if (vocab.size() >= (std::size_t{1} << kIdBits)) {
    throw Error(ErrorCode::kInvalidArgument, "vocabulary too large for trigram keys");
  }
  std::size_t total_tokens = 0;
  for (const auto& s : corpus) total_tokens += s.size();
  if (corpus.empty() || total_tokens < 3) {
    throw Error(ErrorCode::kInsufficientData, "language model needs at least three tokens");
  }

  // Raw trigram counts over padded sentences.
  std::unordered_map<std::uint64_t, long> tri_counts;
  double events = 0.0;
  for (const auto& s : corpus) {
    std::vector<TokenId> ids = {Vocab::kBos, Vocab::kBos};
    for (const auto& t : s.tokens) ids.push_back(vocab.id(t));
    ids.push_back(Vocab::kEos);
    for (std::size_t i = 2; i < ids.size(); ++i) {
      ++tri_counts[pack3(ids[i - 2], ids[i - 1], ids[i])];
      events += 1.0;
    }
  }

  // Continuation counts: distinct left extensions of each bigram and unigram.
  std::unordered_map<std::uint64_t, long> bi_cont;
  for (const auto& [key, c] : tri_counts) {
    const auto v = static_cast<TokenId>((key >> kIdBits) & kIdMask);
    const auto w = static_cast<TokenId>(key & kIdMask);
    ++bi_cont[TrigramLM::pack(v, w)];
  }
  std::unordered_map<TokenId, long> uni_cont;
  for (const auto& [key, c] : bi_cont) ++uni_cont[TrigramLM::unpack(key).second];

  TrigramLM lm;
  lm.vocab_ = vocab;
  lm.prune_threshold_ = prune_threshold;
  lm.discounts_ = {kn_discount(uni_cont), kn_discount(bi_cont), kn_discount(tri_counts)};
  const double d1 = lm.discounts_[0];
  const double d2 = lm.discounts_[1];
  const double d3 = lm.discounts_[2];

  // Unigram level, interpolated with uniform over predicted events.
  const std::size_t v_size = vocab.size();
  const double events_uniform = 1.0 / static_cast<double>(lm.event_count());
  double uni_total = 0.0;
  for (const auto& [w, c] : uni_cont) uni_total += static_cast<double>(c);
  const double uni_gamma = d1 * static_cast<double>(uni_cont.size()) / uni_total;
  lm.unigram_.assign(v_size, 0.0);
  for (std::size_t w = 0; w < v_size; ++w) {
    if (w == static_cast<std::size_t>(Vocab::kPad) || w == static_cast<std::size_t>(Vocab::kBos)) continue;
    auto it = uni_cont.find(static_cast<TokenId>(w));
    const double c = it == uni_cont.end() ? 0.0 : static_cast<double>(it->second);
    lm.unigram_[w] = std::max(c - d1, 0.0) / uni_total + uni_gamma * events_uniform;
  }

  // Bigram level over continuation counts.
  std::map<TokenId, std::vector<std::pair<TokenId, long>>> bi_groups;
  for (const auto& [key, c] : bi_cont) {
    auto [v, w] = TrigramLM::unpack(key);
    bi_groups[v].emplace_back(w, c);
  }
  for (auto& [v, list] : bi_groups) {
    std::sort(list.begin(), list.end());
    double total = 0.0;
    for (const auto& [w, c] : list) total += static_cast<double>(c);
    TrigramLM::Context ctx;
    ctx.backoff = d2 * static_cast<double>(list.size()) / total;
    for (const auto& [w, c] : list) {
      const double p = std::max(static_cast<double>(c) - d2, 0.0) / total +
                       ctx.backoff * lm.unigram_[static_cast<std::size_t>(w)];
      ctx.entries.push_back({w, p});
    }
    lm.bigrams_.emplace(v, std::move(ctx));
  }

  // Trigram level over raw counts; also remember history weights.
  std::map<std::uint64_t, std::vector<std::pair<TokenId, long>>> tri_groups;
  for (const auto& [key, c] : tri_counts) {
    tri_groups[key >> kIdBits].emplace_back(static_cast<TokenId>(key & kIdMask), c);
  }
  std::unordered_map<std::uint64_t, double> tri_history;
  std::unordered_map<TokenId, double> bi_history;
  for (auto& [ctx_key, list] : tri_groups) {
    std::sort(list.begin(), list.end());
    double total = 0.0;
    for (const auto& [w, c] : list) total += static_cast<double>(c);
    const auto [u, v] = TrigramLM::unpack(ctx_key);
    tri_history[ctx_key] = total / events;
    bi_history[v] += total / events;
    TrigramLM::Context ctx;
    ctx.backoff = d3 * static_cast<double>(list.size()) / total;
    for (const auto& [w, c] : list) {
      const double p = (static_cast<double>(c) - d3) / total + ctx.backoff * lm.bigram_prob(v, w);
      ctx.entries.push_back({w, p});
    }
    lm.trigrams_.emplace(ctx_key, std::move(ctx));
  }

  if (prune_threshold <= 0.0) return lm;

  // Trigram pruning against the unpruned lower orders.
  for (auto& [ctx_key, ctx] : lm.trigrams_) {
    const TokenId v = TrigramLM::unpack(ctx_key).second;
    const double seen = sum_entries(ctx);
    double lower_seen = 0.0;
    for (const auto& e : ctx.entries) lower_seen += lm.bigram_prob(v, e.word);
    std::vector<TrigramLM::Entry> kept;
    for (const auto& e : ctx.entries) {
      const double cost = pruning_cost(tri_history[ctx_key], e.prob, lm.bigram_prob(v, e.word),
                                       seen, lower_seen, ctx.backoff);
      if (cost >= prune_threshold) kept.push_back(e);
    }
    ctx.entries = std::move(kept);
  }

  // Bigram pruning; bigrams that are still trigram histories stay.
  for (auto& [v, ctx] : lm.bigrams_) {
    const double seen = sum_entries(ctx);
    double lower_seen = 0.0;
    for (const auto& e : ctx.entries) lower_seen += lm.unigram_[static_cast<std::size_t>(e.word)];
    std::vector<TrigramLM::Entry> kept;
    for (const auto& e : ctx.entries) {
      auto hist = lm.trigrams_.find(TrigramLM::pack(v, e.word));
      const bool is_history = hist != lm.trigrams_.end() && !hist->second.entries.empty();
      const double cost = pruning_cost(bi_history[v], e.prob,
                                       lm.unigram_[static_cast<std::size_t>(e.word)], seen,
                                       lower_seen, ctx.backoff);
      if (is_history || cost >= prune_threshold) kept.push_back(e);
    }
    ctx.entries = std::move(kept);
  }

  // Restore normalization bottom-up.
  for (auto it = lm.bigrams_.begin(); it != lm.bigrams_.end();) {
    if (it->second.entries.empty()) {
      it = lm.bigrams_.erase(it);
      continue;
    }
    double lower_seen = 0.0;
    for (const auto& e : it->second.entries) lower_seen += lm.unigram_[static_cast<std::size_t>(e.word)];
    it->second.backoff = recompute_backoff(sum_entries(it->second), lower_seen);
    ++it;
  }
  for (auto it = lm.trigrams_.begin(); it != lm.trigrams_.end();) {
    if (it->second.entries.empty()) {
      it = lm.trigrams_.erase(it);
      continue;
    }
    const TokenId v = TrigramLM::unpack(it->first).second;
    double lower_seen = 0.0;
    for (const auto& e : it->second.entries) lower_seen += lm.bigram_prob(v, e.word);
    it->second.backoff = recompute_backoff(sum_entries(it->second), lower_seen);
    ++it;
  }
  return lm;
}

double score_ids(const TrigramLM& lm, const std::vector<TokenId>& ids) {
  if (ids.empty()) throw Error(ErrorCode::kEmptyInput, "cannot score an empty sequence");
  double total = 0.0;
  TokenId u = Vocab::kBos;
  TokenId v = Vocab::kBos;
  for (TokenId w : ids) {
    total += lm.log_prob(u, v, w);
    u = v;
    v = w;
  }
  total += lm.log_prob(u, v, Vocab::kEos);
  return total;
}

double score_sequence(const TrigramLM& lm, const std::vector<std::string>& tokens) {
  return score_ids(lm, lm.vocab().encode(tokens));
}

std::vector<double> next_token_distribution(const TrigramLM& lm, TokenId u, TokenId v) {
  std::vector<double> p = lm.distribution(u, v);
  p[static_cast<std::size_t>(Vocab::kUnk)] = 0.0;
  p[static_cast<std::size_t>(Vocab::kPad)] = 0.0;
  p[static_cast<std::size_t>(Vocab::kBos)] = 0.0;
  double total = 0.0;
  for (double x : p) total += x;
  for (double& x : p) x /= total;
  return p;
}

Sentence insert_trigram_words(const TrigramLM& lm, const Sentence& sentence,
                              double expansion_rate, std::uint64_t seed) {
  if (expansion_rate < 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "expansion rate must be at least 1");
  }
  Sentence out = sentence;
  std::vector<TokenId> ids = lm.vocab().encode(sentence.tokens);
  const double wanted = (expansion_rate - 1.0) * static_cast<double>(sentence.size());
  // The small offset keeps exact products such as 0.65 * 20 from rounding up.
  auto insertions = static_cast<std::size_t>(std::ceil(wanted - 1e-9));
  if (wanted <= 0.0) insertions = 0;
  Rng rng(seed);
  for (std::size_t k = 0; k < insertions && out.tokens.size() < kMaxSentenceTokens; ++k) {
    const std::size_t gap = rng.index(ids.size() + 1);
    const TokenId u = gap >= 2 ? ids[gap - 2] : Vocab::kBos;
    const TokenId v = gap >= 1 ? ids[gap - 1] : Vocab::kBos;
    std::vector<double> p = next_token_distribution(lm, u, v);
    p[static_cast<std::size_t>(Vocab::kEos)] = 0.0;
    const auto w = static_cast<TokenId>(rng.categorical(p));
    ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(gap), w);
    out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(gap), lm.vocab().token(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ARPA serialization. Probabilities are stored as log10 with 17 significant
// digits. <s> and the <s> <s> history carry -99 since they are never
// predicted; only their back-off weights matter.

void TrigramLM::write_arpa(std::ostream& out) const {
  auto log10_or_zero = [](double p) { return p > 0.0 ? std::log10(p) : kArpaZero; };
  out << std::setprecision(17);
  out << "# kernelsmith interpolated Kneser-Ney trigram\n";
  out << "# discounts " << discounts_[0] << ' ' << discounts_[1] << ' ' << discounts_[2] << '\n';
  out << "# prune_threshold " << prune_threshold_ << "\n\n";

  std::vector<TokenId> bigram_ctx;
  for (const auto& [v, ctx] : bigrams_) bigram_ctx.push_back(v);
  std::sort(bigram_ctx.begin(), bigram_ctx.end());
  std::vector<std::uint64_t> trigram_ctx;
  for (const auto& [k, ctx] : trigrams_) trigram_ctx.push_back(k);
  std::sort(trigram_ctx.begin(), trigram_ctx.end());

  // Trigram histories with no explicit bigram of their own.
  std::vector<std::uint64_t> history_only;
  for (std::uint64_t k : trigram_ctx) {
    auto [u, v] = unpack(k);
    auto it = bigrams_.find(u);
    bool found = false;
    if (it != bigrams_.end()) lookup(it->second, v, &found);
    if (!found) history_only.push_back(k);
  }

  out << "\\data\\\n";
  out << "ngram 1=" << vocab_.size() - 1 << '\n';
  out << "ngram 2=" << num_ngrams(2) + history_only.size() << '\n';
  out << "ngram 3=" << num_ngrams(3) << "\n\n";

  out << "\\1-grams:\n";
  for (std::size_t w = 1; w < vocab_.size(); ++w) {
    const auto id = static_cast<TokenId>(w);
    out << log10_or_zero(unigram_[w]) << '\t' << vocab_.token(id);
    if (auto it = bigrams_.find(id); it != bigrams_.end()) {
      out << '\t' << std::log10(it->second.backoff);
    }
    out << '\n';
  }

  auto trigram_bow = [&](TokenId u, TokenId v) -> const Context* {
    auto it = trigrams_.find(pack(u, v));
    return it == trigrams_.end() ? nullptr : &it->second;
  };

  out << "\n\\2-grams:\n";
  std::vector<std::pair<std::uint64_t, double>> bigram_lines;
  for (TokenId v : bigram_ctx) {
    for (const auto& e : bigrams_.at(v).entries) bigram_lines.emplace_back(pack(v, e.word), e.prob);
  }
  for (std::uint64_t k : history_only) bigram_lines.emplace_back(k, 0.0);
  std::sort(bigram_lines.begin(), bigram_lines.end());
  for (const auto& [k, p] : bigram_lines) {
    auto [v, w] = unpack(k);
    out << log10_or_zero(p) << '\t' << vocab_.token(v) << ' ' << vocab_.token(w);
    if (const Context* ctx = trigram_bow(v, w)) out << '\t' << std::log10(ctx->backoff);
    out << '\n';
  }

  out << "\n\\3-grams:\n";
  for (std::uint64_t k : trigram_ctx) {
    auto [u, v] = unpack(k);
    for (const auto& e : trigrams_.at(k).entries) {
      out << std::log10(e.prob) << '\t' << vocab_.token(u) << ' ' << vocab_.token(v) << ' '
          << vocab_.token(e.word) << '\n';
    }
  }
  out << "\n\\end\\\n";
}

TrigramLM TrigramLM::read_arpa(std::istream& in) {
  TrigramLM lm;
  std::string line;
  int section = 0;
  std::vector<std::pair<std::string, std::pair<double, double>>> unigram_lines;
  struct Line {
    std::vector<std::string> words;
    double logp;
    double logbow;
    bool has_bow;
  };
  std::vector<Line> higher[2];

  auto parse_error = [](const std::string& msg) { return Error(ErrorCode::kParseError, "arpa: " + msg); };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (section == 0) {
      if (line.rfind("# discounts ", 0) == 0) {
        std::istringstream ss(line.substr(12));
        ss >> lm.discounts_[0] >> lm.discounts_[1] >> lm.discounts_[2];
      } else if (line.rfind("# prune_threshold ", 0) == 0) {
        lm.prune_threshold_ = std::stod(line.substr(18));
      }
      if (line == "\\data\\") section = -1;
      continue;
    }
    if (line.empty() || line.rfind("ngram ", 0) == 0) continue;
    if (line == "\\1-grams:") { section = 1; continue; }
    if (line == "\\2-grams:") { section = 2; continue; }
    if (line == "\\3-grams:") { section = 3; continue; }
    if (line == "\\end\\") break;
    if (section < 1) throw parse_error("unexpected line before n-gram sections: " + line);

    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() < 2) throw parse_error("malformed line: " + line);
    Line parsed;
    parsed.logp = std::stod(fields[0]);
    std::istringstream ws(fields[1]);
    for (std::string w; ws >> w;) parsed.words.push_back(w);
    parsed.has_bow = fields.size() >= 3;
    parsed.logbow = parsed.has_bow ? std::stod(fields[2]) : 0.0;
    if (parsed.words.size() != static_cast<std::size_t>(section)) {
      throw parse_error("n-gram order mismatch: " + line);
    }
    if (section == 1) {
      unigram_lines.push_back({parsed.words[0], {parsed.logp, parsed.has_bow ? parsed.logbow : 0.0}});
      if (!parsed.has_bow) unigram_lines.back().second.second = std::numeric_limits<double>::quiet_NaN();
    } else {
      higher[section - 2].push_back(std::move(parsed));
    }
  }
  if (unigram_lines.empty()) throw parse_error("no unigrams");

  for (const auto& [word, vals] : unigram_lines) lm.vocab_.add(word);
  lm.unigram_.assign(lm.vocab_.size(), 0.0);
  auto pow10 = [](double x) { return x <= kArpaZero ? 0.0 : std::pow(10.0, x); };
  for (const auto& [word, vals] : unigram_lines) {
    const TokenId id = lm.vocab_.id(word);
    if (id != Vocab::kBos) lm.unigram_[static_cast<std::size_t>(id)] = pow10(vals.first);
    if (!std::isnan(vals.second)) lm.bigrams_[id].backoff = std::pow(10.0, vals.second);
  }
  auto require = [&](const std::string& w) {
    if (!lm.vocab_.contains(w)) throw parse_error("n-gram uses unknown word " + w);
    return lm.vocab_.id(w);
  };
  for (const auto& l : higher[0]) {
    const TokenId v = require(l.words[0]);
    const TokenId w = require(l.words[1]);
    if (l.logp > kArpaZero) lm.bigrams_[v].entries.push_back({w, std::pow(10.0, l.logp)});
    if (l.has_bow) lm.trigrams_[pack(v, w)].backoff = std::pow(10.0, l.logbow);
  }
  for (const auto& l : higher[1]) {
    const TokenId u = require(l.words[0]);
    const TokenId v = require(l.words[1]);
    const TokenId w = require(l.words[2]);
    lm.trigrams_[pack(u, v)].entries.push_back({w, std::pow(10.0, l.logp)});
  }
  auto by_word = [](const Entry& a, const Entry& b) { return a.word < b.word; };
  for (auto it = lm.bigrams_.begin(); it != lm.bigrams_.end();) {
    std::sort(it->second.entries.begin(), it->second.entries.end(), by_word);
    it = (it->second.entries.empty() && it->second.backoff == 1.0) ? lm.bigrams_.erase(it) : std::next(it);
  }
  for (auto it = lm.trigrams_.begin(); it != lm.trigrams_.end();) {
    std::sort(it->second.entries.begin(), it->second.entries.end(), by_word);
    it = (it->second.entries.empty() && it->second.backoff == 1.0) ? lm.trigrams_.erase(it) : std::next(it);
  }
  return lm;
}

void TrigramLM::save_arpa(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  write_arpa(out);
}

TrigramLM TrigramLM::load_arpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  return read_arpa(in);
}

}  // namespace ks
