#include "kernelsmith/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"
#include "kernelsmith/textprep.hpp"

namespace ks {
namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t total(const NgramCounts& c) {
  std::size_t t = 0;
  for (const auto& [_, k] : c) t += k;
  return t;
}

std::size_t clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [gram, k] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(k, it->second);
  }
  return m;
}

void require_nonempty(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "overlap metrics need non-empty sequences");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

Eigen::VectorXd mean_of(const std::vector<Eigen::VectorXd>& v) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(v.front().size());
  for (const auto& x : v) m += x;
  return m / static_cast<double>(v.size());
}

void check_sequences(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "embedding sequences must be non-empty");
  const auto dim = a.front().size();
  for (const auto* seq : {&a, &b}) {
    for (const auto& x : *seq) {
      if (x.size() != dim) throw Error(ErrorCode::kShapeError, "embedding dimensions differ");
    }
  }
}

}  // namespace

double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  require_nonempty(candidate, reference);
  const NgramCounts ref = ngram_counts(reference, n);
  const NgramCounts cand = ngram_counts(candidate, n);
  if (ref.empty()) return cand.empty() ? 1.0 : 0.0;
  return static_cast<double>(clipped_matches(cand, ref)) / static_cast<double>(total(ref));
}

double bleu_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  require_nonempty(candidate, reference);
  double log_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const NgramCounts cand = ngram_counts(candidate, k);
    const NgramCounts ref = ngram_counts(reference, k);
    double p = 1.0;
    if (!(cand.empty() && ref.empty())) {
      const std::size_t matches = clipped_matches(cand, ref);
      const double num = matches == 0 ? kBleuEpsilon : static_cast<double>(matches);
      p = num / static_cast<double>(std::max<std::size_t>(1, total(cand)));
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

OverlapScores ngram_overlap_metrics(const Tokens& candidate, const Tokens& reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2),
          bleu_n(candidate, reference, 2), bleu_n(candidate, reference, 4)};
}

std::size_t added_words(const Tokens& input, const Tokens& output) {
  std::map<std::string, long> balance;
  for (const auto& t : output) ++balance[t];
  for (const auto& t : input) --balance[t];
  std::size_t added = 0;
  for (const auto& [_, k] : balance) {
    if (k > 0) added += static_cast<std::size_t>(k);
  }
  return added;
}

DiversityScores diversity_metrics(const Tokens& input, const Tokens& output) {
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "diversity metrics need a non-empty input");
  DiversityScores d;
  d.expansion_ratio = static_cast<double>(output.size()) / static_cast<double>(input.size());
  d.added_words = added_words(input, output);
  if (output.empty()) return d;
  auto dist = [&](std::size_t n) {
    const NgramCounts in = ngram_counts(input, n);
    const NgramCounts out = ngram_counts(output, n);
    std::size_t novel = 0;
    for (const auto& [gram, _] : out) {
      if (!in.contains(gram)) ++novel;
    }
    return static_cast<double>(novel) / static_cast<double>(output.size());
  };
  d.dist1 = dist(1);
  d.dist2 = dist(2);
  return d;
}

double discrete_frechet(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  check_sequences(a, b);
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  std::vector<double> dp(m * n);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return dp[i * n + j]; };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = (a[i] - b[j]).norm();
      double reach;
      if (i == 0 && j == 0) reach = 0.0;
      else if (i == 0) reach = at(0, j - 1);
      else if (j == 0) reach = at(i - 1, 0);
      else reach = std::min({at(i - 1, j), at(i - 1, j - 1), at(i, j - 1)});
      at(i, j) = std::max(reach, d);
    }
  }
  return at(m - 1, n - 1);
}

double cosine_distance_of_means(const std::vector<Eigen::VectorXd>& a,
                                const std::vector<Eigen::VectorXd>& b) {
  check_sequences(a, b);
  const Eigen::VectorXd ma = mean_of(a);
  const Eigen::VectorXd mb = mean_of(b);
  const double na = ma.norm();
  const double nb = mb.norm();
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::max(0.0, 1.0 - ma.dot(mb) / (na * nb));
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kDegenerate, "correlation of a constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kShapeError, "correlation series differ in length");
  if (x.size() < 3) throw Error(ErrorCode::kShapeError, "correlation needs at least 3 points");
  return {pearson(x, y), pearson(average_ranks(x), average_ranks(y))};
}

Eigen::VectorXd RandomProjectionEmbedder::token(const std::string& token) const {
  Rng rng(fnv1a(token) ^ (seed_ * 0x9E3779B97F4A7C15ULL));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal() * scale;
  return v;
}

std::vector<Eigen::VectorXd> RandomProjectionEmbedder::tokens(const Tokens& tokens) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(token(t));
  return out;
}

std::vector<Eigen::VectorXd> RandomProjectionEmbedder::prefixes(const Tokens& tokens) const {
  std::vector<Eigen::VectorXd> out;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    sum += token(tokens[i]);
    out.push_back(sum / static_cast<double>(i + 1));
  }
  return out;
}

MetricReport evaluate_pair(const Tokens& input, const Tokens& output, const Tokens* reference,
                           const RandomProjectionEmbedder& embedder) {
  MetricReport r;
  r.input_len = input.size();
  r.output_len = output.size();
  r.diversity = diversity_metrics(input, output);
  if (reference != nullptr && !reference->empty() && !output.empty()) {
    r.overlap = ngram_overlap_metrics(output, *reference);
  }
  if (!output.empty()) {
    r.frechet = discrete_frechet(embedder.prefixes(input), embedder.prefixes(output));
    r.cosine_dist = cosine_distance_of_means(embedder.tokens(input), embedder.tokens(output));
  }
  return r;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, '\t')) cols.push_back(cur);
  if (!line.empty() && line.back() == '\t') cols.emplace_back();
  return cols;
}

Tokens tokenize_or_empty(const std::string& text) {
  try {
    return normalize_sentence(text).tokens;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptySentence) return {};
    throw;
  }
}

void write_row(std::ostream& out, const std::string& label, const MetricReport& r) {
  out << label << ',' << r.input_len << ',' << r.output_len << ',' << r.diversity.expansion_ratio << ','
      << r.diversity.added_words << ',' << r.diversity.dist1 << ',' << r.diversity.dist2 << ','
      << r.frechet << ',' << r.cosine_dist;
  if (r.overlap) {
    out << ',' << r.overlap->rouge1 << ',' << r.overlap->rouge2 << ',' << r.overlap->bleu2 << ','
        << r.overlap->bleu4;
  } else {
    out << ",,,,";
  }
  out << '\n';
}

}  // namespace

BatchSummary evaluate_tsv(const std::string& tsv_path, const std::string& csv_path,
                          const RandomProjectionEmbedder& embedder) {
  std::ifstream in(tsv_path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + tsv_path);
  std::ofstream out(csv_path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + csv_path);
  out.precision(10);
  out << "row,input_len,output_len,expansion_ratio,added_words,dist1,dist2,frechet,cosine_dist,"
         "rouge1,rouge2,bleu2,bleu4\n";

  BatchSummary s;
  OverlapScores overlap_sum;
  double input_len = 0, output_len = 0, added = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 3) {
      throw Error(ErrorCode::kParseError, tsv_path + ":" + std::to_string(line_no) + ": expected 2 or 3 columns");
    }
    const Tokens input = tokenize_or_empty(cols[0]);
    const Tokens output = tokenize_or_empty(cols[1]);
    if (input.empty()) {
      throw Error(ErrorCode::kParseError, tsv_path + ":" + std::to_string(line_no) + ": empty input");
    }
    Tokens reference;
    if (cols.size() == 3) reference = tokenize_or_empty(cols[2]);
    const MetricReport r = evaluate_pair(input, output, reference.empty() ? nullptr : &reference, embedder);
    write_row(out, std::to_string(s.rows), r);

    ++s.rows;
    input_len += static_cast<double>(r.input_len);
    output_len += static_cast<double>(r.output_len);
    added += static_cast<double>(r.diversity.added_words);
    s.mean.diversity.expansion_ratio += r.diversity.expansion_ratio;
    s.mean.diversity.dist1 += r.diversity.dist1;
    s.mean.diversity.dist2 += r.diversity.dist2;
    s.mean.frechet += r.frechet;
    s.mean.cosine_dist += r.cosine_dist;
    if (r.overlap) {
      ++s.with_reference;
      overlap_sum.rouge1 += r.overlap->rouge1;
      overlap_sum.rouge2 += r.overlap->rouge2;
      overlap_sum.bleu2 += r.overlap->bleu2;
      overlap_sum.bleu4 += r.overlap->bleu4;
    }
  }
  if (s.rows > 0) {
    const double n = static_cast<double>(s.rows);
    s.mean.input_len = static_cast<std::size_t>(std::llround(input_len / n));
    s.mean.output_len = static_cast<std::size_t>(std::llround(output_len / n));
    s.mean.diversity.added_words = static_cast<std::size_t>(std::llround(added / n));
    s.mean.diversity.expansion_ratio /= n;
    s.mean.diversity.dist1 /= n;
    s.mean.diversity.dist2 /= n;
    s.mean.frechet /= n;
    s.mean.cosine_dist /= n;
  }
  if (s.with_reference > 0) {
    const double k = static_cast<double>(s.with_reference);
    s.mean.overlap = OverlapScores{overlap_sum.rouge1 / k, overlap_sum.rouge2 / k, overlap_sum.bleu2 / k,
                                   overlap_sum.bleu4 / k};
  }
  write_row(out, "mean", s.mean);
  return s;
}

}  // namespace ks
