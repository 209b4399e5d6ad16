#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ks {

using Tokens = std::vector<std::string>;

struct OverlapScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double bleu2 = 0.0;
  double bleu4 = 0.0;
};

// ROUGE-n: clipped n-gram recall against the reference. BLEU-n: brevity
// penalty times the geometric mean of clipped precisions for orders 1..n,
// with a zero match count replaced by 1e-9. An order for which neither side
// has any n-gram counts as 1. Throws kEmptyInput when either side is empty.
OverlapScores ngram_overlap_metrics(const Tokens& candidate, const Tokens& reference);
double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n);
double bleu_n(const Tokens& candidate, const Tokens& reference, std::size_t n);

inline constexpr double kBleuEpsilon = 1e-9;

struct DiversityScores {
  double dist1 = 0.0;
  double dist2 = 0.0;
  double expansion_ratio = 0.0;
  std::size_t added_words = 0;
};

// dist-n: distinct output n-grams that never occur in the input, over the
// output length. added_words is the multiset difference output - input.
DiversityScores diversity_metrics(const Tokens& input, const Tokens& output);
std::size_t added_words(const Tokens& input, const Tokens& output);

struct MetricReport {
  std::optional<OverlapScores> overlap;  // only with a reference
  DiversityScores diversity;
  std::size_t input_len = 0;
  std::size_t output_len = 0;
  double frechet = 0.0;
  double cosine_dist = 0.0;
};

// Euclidean discrete Frechet distance; sequences are lists of column
// vectors of one dimension. Throws kShapeError or kEmptyInput.
double discrete_frechet(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b);
// 1 - cos(mean(a), mean(b)); a zero mean vector gives distance 1 unless both are zero.
double cosine_distance_of_means(const std::vector<Eigen::VectorXd>& a,
                                const std::vector<Eigen::VectorXd>& b);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

// Needs equal lengths >= 3 (kShapeError) and nonzero variance (kDegenerate).
Correlation correlation(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> average_ranks(const std::vector<double>& values);

// Deterministic stand-in sentence encoder: each token maps to a fixed
// Gaussian random vector seeded from a hash of its text.
class RandomProjectionEmbedder {
 public:
  explicit RandomProjectionEmbedder(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  std::size_t dim() const { return dim_; }
  Eigen::VectorXd token(const std::string& token) const;
  // One vector per token.
  std::vector<Eigen::VectorXd> tokens(const Tokens& tokens) const;
  // Running means over prefixes 1..n, i.e. bag-of-words prefix embeddings.
  std::vector<Eigen::VectorXd> prefixes(const Tokens& tokens) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

MetricReport evaluate_pair(const Tokens& input, const Tokens& output, const Tokens* reference,
                           const RandomProjectionEmbedder& embedder);

struct BatchSummary {
  std::size_t rows = 0;
  std::size_t with_reference = 0;
  MetricReport mean;  // overlap means cover the rows with a reference
};

// Reads tab-separated (input, output[, reference]) lines, writes a CSV row
// per line plus the aggregate means. Text columns are tokenized with
// normalize_sentence.
BatchSummary evaluate_tsv(const std::string& tsv_path, const std::string& csv_path,
                          const RandomProjectionEmbedder& embedder = RandomProjectionEmbedder{});

}  // namespace ks
