#include "kernelsmith/clustering.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"

namespace ks {

// ---------------------------------------------------------------------------
// Porter stemmer. Indices follow the original C implementation: k is the
// last character of the current stem, j marks the end of a matched prefix.

namespace {

class PorterStemmer {
 public:
  explicit PorterStemmer(std::string word) : b_(std::move(word)), k_(static_cast<int>(b_.size()) - 1) {}

  std::string run() {
    if (k_ <= 1) return b_;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  bool cons(int i) const {
    switch (at(i)) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(i - 1);
      default:
        return true;
    }
  }

  // Number of vowel-consonant sequences in b[0..j].
  int m() const {
    int n = 0;
    int i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i) {
      if (!cons(i)) return true;
    }
    return false;
  }

  bool double_consonant(int i) const { return i >= 1 && at(i) == at(i - 1) && cons(i); }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = at(i);
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) {
    const int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (b_.compare(static_cast<std::size_t>(k_ - len + 1), s.size(), s) != 0) return false;
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
  }

  void replace_if_measured(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  void step1ab() {
    if (at(k_) == 's') {
      if (ends("sses")) {
        k_ -= 2;
      } else if (ends("ies")) {
        set_to("i");
      } else if (at(k_ - 1) != 's') {
        --k_;
      }
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) {
        set_to("ate");
      } else if (ends("bl")) {
        set_to("ble");
      } else if (ends("iz")) {
        set_to("ize");
      } else if (double_consonant(k_)) {
        --k_;
        const char ch = at(k_);
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else if (m() == 1 && cvc(k_)) {
        set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  struct Rule {
    std::string_view from;
    std::string_view to;
  };

  bool apply_first(std::initializer_list<Rule> rules) {
    for (const auto& r : rules) {
      if (ends(r.from)) {
        replace_if_measured(r.to);
        return true;
      }
    }
    return false;
  }

  void step2() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a': apply_first({{"ational", "ate"}, {"tional", "tion"}}); break;
      case 'c': apply_first({{"enci", "ence"}, {"anci", "ance"}}); break;
      case 'e': apply_first({{"izer", "ize"}}); break;
      case 'l': apply_first({{"bli", "ble"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"}}); break;
      case 'o': apply_first({{"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}}); break;
      case 's': apply_first({{"alism", "al"}, {"iveness", "ive"}, {"fulness", "ful"}, {"ousness", "ous"}}); break;
      case 't': apply_first({{"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}}); break;
      case 'g': apply_first({{"logi", "log"}}); break;
      default: break;
    }
  }

  void step3() {
    switch (at(k_)) {
      case 'e': apply_first({{"icate", "ic"}, {"ative", ""}, {"alize", "al"}}); break;
      case 'i': apply_first({{"iciti", "ic"}}); break;
      case 'l': apply_first({{"ical", "ic"}, {"ful", ""}}); break;
      case 's': apply_first({{"ness", ""}}); break;
      default: break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    auto any = [&](std::initializer_list<std::string_view> suffixes) {
      for (auto s : suffixes) {
        if (ends(s)) return true;
      }
      return false;
    };
    bool matched = false;
    switch (at(k_ - 1)) {
      case 'a': matched = any({"al"}); break;
      case 'c': matched = any({"ance", "ence"}); break;
      case 'e': matched = any({"er"}); break;
      case 'i': matched = any({"ic"}); break;
      case 'l': matched = any({"able", "ible"}); break;
      case 'n': matched = any({"ant", "ement", "ment", "ent"}); break;
      case 'o':
        if (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) {
          matched = true;
        } else {
          matched = any({"ou"});
        }
        break;
      case 's': matched = any({"ism"}); break;
      case 't': matched = any({"ate", "iti"}); break;
      case 'u': matched = any({"ous"}); break;
      case 'v': matched = any({"ive"}); break;
      case 'z': matched = any({"ize"}); break;
      default: break;
    }
    if (matched && m() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && double_consonant(k_) && m() > 1) --k_;
  }

  std::string b_;
  int k_;
  int j_ = 0;
};

bool is_lower_alpha(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

bool has_letter(std::string_view w) {
  return std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isalpha(c) != 0; });
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::vector<std::string>> stemmed_documents(const std::vector<Sentence>& sentences) {
  std::unordered_map<std::string, std::string> cache;
  std::vector<std::vector<std::string>> docs;
  docs.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<std::string> d;
    for (const auto& t : s.tokens) {
      if (!has_letter(t)) continue;
      auto it = cache.find(t);
      if (it == cache.end()) it = cache.emplace(t, porter_stem(t)).first;
      d.push_back(it->second);
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void normalize_rows(SparseRows& m) {
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double sq = 0.0;
    for (SparseRows::InnerIterator it(m, r); it; ++it) sq += it.value() * it.value();
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (SparseRows::InnerIterator it(m, r); it; ++it) it.valueRef() *= inv;
  }
}

}  // namespace

std::string porter_stem(std::string_view word) {
  if (!is_lower_alpha(word)) return std::string(word);
  return PorterStemmer(std::string(word)).run();
}

// ---------------------------------------------------------------------------

void ClusterConfig::validate() const {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be at least 2");
  if (!(df_min >= 0.0 && df_min < df_max && df_max <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "df bounds must satisfy 0 <= df_min < df_max <= 1");
  }
  if (max_features == 0) throw Error(ErrorCode::kInvalidArgument, "max_features must be positive");
}

TermMatrix vectorize(const std::vector<Sentence>& sentences, const ClusterConfig& config) {
  ClusterConfig checked = config;
  checked.k = std::max<std::size_t>(checked.k, 2);  // k is irrelevant here
  checked.validate();
  if (sentences.empty()) throw Error(ErrorCode::kEmptyInput, "cannot vectorize an empty corpus");
  const auto docs = stemmed_documents(sentences);
  const std::size_t n = docs.size();
  TermMatrix out;
  std::vector<Eigen::Triplet<double>> triplets;

  if (config.vectorizer == VectorizerKind::kHashing) {
    for (std::size_t r = 0; r < n; ++r) {
      std::map<std::size_t, double> row;
      for (const auto& stem : docs[r]) {
        const std::uint64_t h = fnv1a(stem);
        const std::size_t bucket = static_cast<std::size_t>(h % config.max_features);
        row[bucket] += (h >> 63) != 0 ? -1.0 : 1.0;
      }
      for (const auto& [c, v] : row) {
        if (v != 0.0) triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
      }
    }
    if (triplets.empty()) throw Error(ErrorCode::kEmptyVocabulary, "no features survived vectorization");
    out.features.reserve(config.max_features);
    for (std::size_t c = 0; c < config.max_features; ++c) out.features.push_back("#" + std::to_string(c));
    out.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.max_features));
    out.rows.setFromTriplets(triplets.begin(), triplets.end());
    normalize_rows(out.rows);
    return out;
  }

  std::map<std::string, std::size_t> df;
  std::map<std::string, std::size_t> tf_total;
  for (const auto& d : docs) {
    std::map<std::string, std::size_t> seen;
    for (const auto& s : d) ++seen[s];
    for (const auto& [s, c] : seen) {
      ++df[s];
      tf_total[s] += c;
    }
  }
  const double lo = config.df_min * static_cast<double>(n);
  const double hi = config.df_max * static_cast<double>(n);
  std::vector<std::string> kept;
  for (const auto& [s, d] : df) {
    const double x = static_cast<double>(d);
    if (x >= lo && x <= hi) kept.push_back(s);
  }
  if (kept.size() > config.max_features) {
    std::stable_sort(kept.begin(), kept.end(),
                     [&](const std::string& a, const std::string& b) { return tf_total[a] > tf_total[b]; });
    kept.resize(config.max_features);
    std::sort(kept.begin(), kept.end());
  }
  if (kept.empty()) throw Error(ErrorCode::kEmptyVocabulary, "no features survived the df bounds");

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < kept.size(); ++c) column.emplace(kept[c], c);
  out.features = kept;
  out.idf.resize(kept.size());
  for (std::size_t c = 0; c < kept.size(); ++c) {
    out.idf[c] = std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(df[kept[c]]))) + 1.0;
  }
  for (std::size_t r = 0; r < n; ++r) {
    std::map<std::size_t, double> row;
    for (const auto& s : docs[r]) {
      auto it = column.find(s);
      if (it != column.end()) row[it->second] += 1.0;
    }
    for (const auto& [c, tf] : row) triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), tf * out.idf[c]);
  }
  out.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
  out.rows.setFromTriplets(triplets.begin(), triplets.end());
  normalize_rows(out.rows);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

template <typename M>
LsaResult randomized_svd(const M& x, std::size_t dims, std::uint64_t seed, std::size_t power, std::size_t oversample) {
  const auto rows = static_cast<std::size_t>(x.rows());
  const auto cols = static_cast<std::size_t>(x.cols());
  if (dims == 0 || dims > std::min(rows, cols)) {
    throw Error(ErrorCode::kRankError, "requested " + std::to_string(dims) + " components from a " +
                                           std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  const std::size_t l = std::min(dims + oversample, std::min(rows, cols));
  Rng rng(seed);
  Eigen::MatrixXd omega(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(l));
  for (Eigen::Index c = 0; c < omega.cols(); ++c) {
    for (Eigen::Index r = 0; r < omega.rows(); ++r) omega(r, c) = rng.normal();
  }
  Eigen::MatrixXd q = orthonormal_basis(x * omega);
  for (std::size_t i = 0; i < power; ++i) {
    const Eigen::MatrixXd z = orthonormal_basis(Eigen::MatrixXd(x.transpose() * q));
    q = orthonormal_basis(x * z);
  }
  const Eigen::MatrixXd b = (x.transpose() * q).transpose();  // l x cols
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto k = static_cast<Eigen::Index>(dims);
  LsaResult out;
  out.singular_values = svd.singularValues().head(k);
  const Eigen::MatrixXd u = q * svd.matrixU().leftCols(k);
  out.embedding = u * out.singular_values.asDiagonal();
  out.components = svd.matrixV().leftCols(k).transpose();
  return out;
}

}  // namespace

LsaResult lsa_reduce(const SparseRows& matrix, std::size_t dims, std::uint64_t seed, std::size_t power_iterations,
                     std::size_t oversample) {
  return randomized_svd(matrix, dims, seed, power_iterations, oversample);
}

LsaResult lsa_reduce(const Eigen::MatrixXd& matrix, std::size_t dims, std::uint64_t seed,
                     std::size_t power_iterations, std::size_t oversample) {
  return randomized_svd(matrix, dims, seed, power_iterations, oversample);
}

// ---------------------------------------------------------------------------

namespace {

double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids, std::vector<std::size_t>& labels,
              std::vector<double>& dist2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<std::size_t>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    dist2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), points.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.index(n);
  centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(0)).squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick;
    if (total > 0.0) {
      pick = rng.categorical(d2);
    } else {
      // Every point coincides with a centre; take the first unused one.
      pick = 0;
      while (pick + 1 < n && chosen[pick]) ++pick;
    }
    chosen[pick] = true;
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c))).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                    double tol) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || n < k) throw Error(ErrorCode::kInvalidArgument, "kmeans needs at least k points and k >= 1");
  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_seeds(points, k, rng);
  r.labels.assign(n, 0);
  std::vector<double> d2(n);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    r.inertia = assign(points, r.centroids, r.labels, d2);
    r.inertia_history.push_back(r.inertia);
    r.iterations = iter + 1;

    std::vector<std::size_t> counts(k, 0);
    for (auto l : r.labels) ++counts[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Re-seed with the worst-served point whose own cluster can spare it.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[r.labels[i]] > 1 && (far == n || d2[i] > d2[far])) far = i;
      }
      if (far == n) continue;
      --counts[r.labels[far]];
      counts[c] = 1;
      r.labels[far] = c;
      d2[far] = 0.0;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(r.centroids.rows(), r.centroids.cols());
    for (std::size_t i = 0; i < n; ++i) next.row(static_cast<Eigen::Index>(r.labels[i])) += points.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < k; ++c) {
      const auto row = static_cast<Eigen::Index>(c);
      if (counts[c] > 0) {
        next.row(row) /= static_cast<double>(counts[c]);
      } else {
        next.row(row) = r.centroids.row(row);
      }
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, (next.row(static_cast<Eigen::Index>(c)) - r.centroids.row(static_cast<Eigen::Index>(c))).norm());
    }
    r.centroids = std::move(next);
    if (shift < tol) break;
  }
  r.inertia = assign(points, r.centroids, r.labels, d2);
  if (r.inertia_history.empty() || r.inertia != r.inertia_history.back()) r.inertia_history.push_back(r.inertia);
  return r;
}

double silhouette(const Eigen::MatrixXd& points, const std::vector<std::size_t>& labels) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (labels.size() != n) throw Error(ErrorCode::kShapeError, "one label per point required");
  std::map<std::size_t, std::size_t> sizes;
  for (auto l : labels) ++sizes[l];
  if (sizes.size() < 2) throw Error(ErrorCode::kUndefined, "silhouette needs at least two clusters");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<std::size_t, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sum) {
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

nlohmann::json cluster_report(const std::vector<Sentence>& sentences, const ClusterConfig& config,
                              const std::vector<std::size_t>& ks, std::size_t top_terms) {
  config.validate();
  const TermMatrix tm = vectorize(sentences, config);
  Eigen::MatrixXd points;
  Eigen::MatrixXd components;
  if (config.lsa_dims > 0) {
    LsaResult lsa = lsa_reduce(tm.rows, config.lsa_dims, config.seed);
    points = std::move(lsa.embedding);
    components = std::move(lsa.components);
  } else {
    points = Eigen::MatrixXd(tm.rows);
  }

  nlohmann::json report;
  report["sentences"] = sentences.size();
  report["features"] = tm.features.size();
  report["vectorizer"] = config.vectorizer == VectorizerKind::kTfidf ? "tfidf" : "hashing";
  report["lsa_dims"] = config.lsa_dims;
  report["seed"] = config.seed;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t k : ks) {
    ClusterConfig c = config;
    c.k = k;
    c.validate();
    const KMeansResult km = kmeans(points, k, config.seed);
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : km.labels) ++sizes[l];
    nlohmann::json run;
    run["k"] = k;
    run["sizes"] = sizes;
    run["inertia"] = km.inertia;
    run["iterations"] = km.iterations;
    try {
      run["silhouette"] = silhouette(points, km.labels);
    } catch (const Error&) {
      run["silhouette"] = nullptr;
    }
    nlohmann::json tops = nlohmann::json::array();
    for (std::size_t cidx = 0; cidx < k; ++cidx) {
      Eigen::VectorXd weights = config.lsa_dims > 0
                                    ? Eigen::VectorXd(components.transpose() * km.centroids.row(static_cast<Eigen::Index>(cidx)).transpose())
                                    : Eigen::VectorXd(km.centroids.row(static_cast<Eigen::Index>(cidx)).transpose());
      std::vector<std::size_t> order(static_cast<std::size_t>(weights.size()));
      std::iota(order.begin(), order.end(), 0);
      const std::size_t keep = std::min(top_terms, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          if (weights[static_cast<Eigen::Index>(a)] != weights[static_cast<Eigen::Index>(b)]) {
                            return weights[static_cast<Eigen::Index>(a)] > weights[static_cast<Eigen::Index>(b)];
                          }
                          return a < b;
                        });
      nlohmann::json terms = nlohmann::json::array();
      for (std::size_t t = 0; t < keep; ++t) terms.push_back(tm.features[order[t]]);
      tops.push_back(std::move(terms));
    }
    run["top_terms"] = std::move(tops);
    runs.push_back(std::move(run));
  }
  report["runs"] = std::move(runs);
  return report;
}

}  // namespace ks
