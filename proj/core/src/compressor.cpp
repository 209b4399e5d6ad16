#include "kernelsmith/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"

namespace ks {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> split_spaces(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

std::string join_spaces(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

void CompressionConfig::validate() const {
  if (!(target_rate > 0.0 && target_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target_rate must be in (0, 1]");
  }
  if (!(min_reduction_for_dataset >= 0.0 && min_reduction_for_dataset < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "min_reduction_for_dataset must be in [0, 1)");
  }
}

std::pair<std::size_t, std::size_t> kernel_length_band(std::size_t n, const CompressionConfig& config) {
  if (config.target_rate >= 1.0) return {n, n};
  const auto target = static_cast<long>(std::lround(config.target_rate * static_cast<double>(n)));
  const auto tol = static_cast<long>(config.rate_tolerance);
  const long lo = std::max(1L, target - tol);
  const long hi = std::min(static_cast<long>(n), target + tol);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

Compression compress_detailed(const TrigramLM& lm, const Sentence& sentence,
                              const CompressionConfig& config) {
  config.validate();
  const std::size_t n = sentence.size();
  if (n < 2) throw Error(ErrorCode::kTooShort, "compression needs at least two tokens");

  Compression result;
  if (config.target_rate >= 1.0) {
    result.kernel = sentence;
    for (std::size_t i = 0; i < n; ++i) result.kept.push_back(i);
    result.score = score_sequence(lm, sentence.tokens);
    return result;
  }

  const auto [lo, hi] = kernel_length_band(n, config);
  const bool force_last = is_sentence_final(sentence.tokens.back());

  // Positions 0 and 1 are the two <s> pads; token i sits at i + 2.
  const std::size_t m = n + 2;
  std::vector<TokenId> ids = {Vocab::kBos, Vocab::kBos};
  for (const auto& t : sentence.tokens) ids.push_back(lm.vocab().id(t));
  auto at = [m](std::size_t a, std::size_t b) { return a * m + b; };

  // transition[(j * m + i) * m + next] = log p(ids[next] | ids[j], ids[i]).
  std::vector<double> transition(m * m * m, kNegInf);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = j + 1; i < m; ++i) {
      for (std::size_t next = std::max<std::size_t>(i + 1, 2); next < m; ++next) {
        transition[(j * m + i) * m + next] = lm.log_prob(ids[j], ids[i], ids[next]);
      }
    }
  }

  // best[k][j][i]: best score with k tokens kept, last two kept at j < i.
  // Flattened as k * m * m + j * m + i.
  const std::size_t layer = m * m;
  std::vector<double> best((hi + 1) * layer, kNegInf);
  std::vector<std::size_t> back((hi + 1) * layer, 0);
  best[0 * layer + at(0, 1)] = 0.0;

  for (std::size_t k = 0; k < hi; ++k) {
    for (std::size_t i = 1; i < m; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double s = best[k * layer + at(j, i)];
        if (s == kNegInf) continue;
        for (std::size_t next = std::max<std::size_t>(i + 1, 2); next < m; ++next) {
          const double cand = s + transition[(j * m + i) * m + next];
          double& slot = best[(k + 1) * layer + at(i, next)];
          if (cand > slot) {
            slot = cand;
            back[(k + 1) * layer + at(i, next)] = j;
          }
        }
      }
    }
  }

  double best_score = kNegInf;
  std::size_t best_k = 0, best_j = 0, best_i = 0;
  for (std::size_t k = lo; k <= hi; ++k) {
    for (std::size_t i = 2; i < m; ++i) {
      if (force_last && i != m - 1) continue;
      for (std::size_t j = 0; j < i; ++j) {
        const double s = best[k * layer + at(j, i)];
        if (s == kNegInf) continue;
        const double total = s + lm.log_prob(ids[j], ids[i], Vocab::kEos);
        if (total > best_score) {
          best_score = total;
          best_k = k;
          best_j = j;
          best_i = i;
        }
      }
    }
  }
  if (best_score == kNegInf) {
    throw Error(ErrorCode::kInvalidArgument, "no admissible compression");
  }

  std::vector<std::size_t> kept;
  std::size_t k = best_k, j = best_j, i = best_i;
  while (i >= 2) {
    kept.push_back(i - 2);
    const std::size_t prev = back[k * layer + at(j, i)];
    i = j;
    j = prev;
    --k;
  }
  std::reverse(kept.begin(), kept.end());

  result.kept = kept;
  result.kernel.source_id = sentence.source_id;
  for (std::size_t idx : kept) result.kernel.tokens.push_back(sentence.tokens[idx]);
  result.score = best_score;
  return result;
}

Sentence compress(const TrigramLM& lm, const Sentence& sentence, const CompressionConfig& config) {
  return compress_detailed(lm, sentence, config).kernel;
}

double reduction(const SentencePair& pair) {
  return 1.0 - static_cast<double>(pair.kernel.size()) / static_cast<double>(pair.original.size());
}

double mean_compression_rate(const std::vector<SentencePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) {
    sum += static_cast<double>(p.kernel.size()) / static_cast<double>(p.original.size());
  }
  return sum / static_cast<double>(pairs.size());
}

ParallelCorpus build_parallel_corpus(const std::vector<Sentence>& corpus, const TrigramLM& lm,
                                     const CompressionConfig& config, std::size_t dev_holdout,
                                     std::uint64_t seed) {
  config.validate();
  if (dev_holdout >= corpus.size()) {
    throw Error(ErrorCode::kInvalidArgument, "dev holdout must be smaller than the corpus");
  }
  std::vector<SentencePair> pairs;
  for (const auto& s : corpus) {
    if (s.size() < 2) continue;
    SentencePair pair{compress(lm, s, config), s};
    if (reduction(pair) + 1e-12 >= config.min_reduction_for_dataset && pair.kernel.size() < s.size()) {
      pairs.push_back(std::move(pair));
    }
  }
  if (pairs.size() <= dev_holdout) {
    throw Error(ErrorCode::kNoPairs, "no sentence pairs survive the reduction filter");
  }
  Rng rng(seed);
  rng.shuffle(std::span<SentencePair>(pairs));
  ParallelCorpus out;
  out.dev.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(dev_holdout));
  out.train.assign(pairs.begin() + static_cast<std::ptrdiff_t>(dev_holdout), pairs.end());
  return out;
}

void write_pairs_tsv(const std::string& path, const std::vector<SentencePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& p : pairs) {
    out << join_spaces(p.kernel.tokens) << '\t' << join_spaces(p.original.tokens) << '\n';
  }
}

std::vector<SentencePair> read_pairs_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::vector<SentencePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": missing TAB");
    }
    SentencePair p;
    p.kernel.tokens = split_spaces(line.substr(0, tab));
    p.original.tokens = split_spaces(line.substr(tab + 1));
    if (p.kernel.empty() || p.original.empty()) {
      throw Error(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": empty side");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace ks
