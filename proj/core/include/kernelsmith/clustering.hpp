#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <nlohmann/json_fwd.hpp>

#include "kernelsmith/textprep.hpp"

namespace ks {

// Porter (1980) suffix-stripping stemmer for lowercase ASCII words; other
// strings are returned unchanged.
std::string porter_stem(std::string_view word);

enum class VectorizerKind { kTfidf, kHashing };

struct ClusterConfig {
  std::size_t k = 10;
  VectorizerKind vectorizer = VectorizerKind::kTfidf;
  std::size_t max_features = 10000;
  double df_min = 1e-5;  // fractions of the sentence count
  double df_max = 1e-2;
  std::size_t lsa_dims = 200;  // 0 skips the reduction
  std::uint64_t seed = 0;

  void validate() const;
};

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TermMatrix {
  SparseRows rows;                    // one L2-normalized row per sentence (empty rows stay zero)
  std::vector<std::string> features;  // stem per column; "#<bucket>" for hashing
  std::vector<double> idf;            // tf-idf only
};

// Stems every token containing a letter and builds tf-idf (raw counts
// times ln((1 + n) / (1 + df)) + 1) or signed-hash features. tf-idf keeps
// stems with df_min * n <= df <= df_max * n, then the max_features most
// frequent. Hashing uses max_features buckets and ignores the df bounds.
// Throws kEmptyInput for an empty corpus, kEmptyVocabulary when nothing is
// left.
TermMatrix vectorize(const std::vector<Sentence>& sentences, const ClusterConfig& config);

struct LsaResult {
  Eigen::MatrixXd embedding;        // n x dims, U * Sigma
  Eigen::VectorXd singular_values;  // descending
  Eigen::MatrixXd components;       // dims x features, V^T
};

// Randomized truncated SVD (Gaussian sketch, power iterations with QR
// re-orthonormalization). Throws kRankError when dims exceeds min(rows, cols)
// or is zero.
LsaResult lsa_reduce(const SparseRows& matrix, std::size_t dims, std::uint64_t seed = 0,
                     std::size_t power_iterations = 4, std::size_t oversample = 10);
LsaResult lsa_reduce(const Eigen::MatrixXd& matrix, std::size_t dims, std::uint64_t seed = 0,
                     std::size_t power_iterations = 4, std::size_t oversample = 10);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Eigen::MatrixXd centroids;  // k x dim
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every assignment step
  std::size_t iterations = 0;
};

// k-means++ seeding then Lloyd iterations until the largest centroid shift
// drops below tol or max_iter is reached. An emptied cluster is re-seeded
// with the point farthest from its centroid. Rows of points are samples.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100, double tol = 1e-6);

// Mean silhouette with Euclidean distances. Members of singleton clusters
// contribute 0, as does a point with a = b = 0. Throws kUndefined with
// fewer than two clusters.
double silhouette(const Eigen::MatrixXd& points, const std::vector<std::size_t>& labels);

// Vectorize, optionally reduce, and cluster once per k; reports sizes,
// silhouette, inertia and the top stems of every centroid.
nlohmann::json cluster_report(const std::vector<Sentence>& sentences, const ClusterConfig& config,
                              const std::vector<std::size_t>& ks, std::size_t top_terms = 10);

}  // namespace ks
