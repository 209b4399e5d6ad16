#include "fixtures.hpp"

#include <array>
#include <sstream>

#include "kernelsmith/random.hpp"

namespace ks::fixtures {
namespace {

template <typename C>
const std::string& pick(Rng& rng, const C& options) {
  return options[rng.index(options.size())];
}

}  // namespace

Sentence make_sentence(const std::string& space_separated) {
  Sentence s;
  std::istringstream in(space_separated);
  for (std::string t; in >> t;) s.tokens.push_back(t);
  return s;
}

std::vector<Sentence> grammar_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> dets = {"the", "a", "this", "every"};
  static const std::vector<std::string> adjs = {"small", "old", "quiet", "green", "tired", "happy"};
  static const std::vector<std::string> nouns = {"cat", "dog", "farmer", "river", "teacher", "house", "bird",
                                                 "child"};
  static const std::vector<std::string> verbs = {"saw", "liked", "followed", "found", "watched", "painted"};
  static const std::vector<std::string> preps = {"near", "behind", "under", "with"};
  static const std::vector<std::string> advs = {"slowly", "again", "today", "quickly"};
  Rng rng(seed);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    auto np = [&] {
      s.tokens.push_back(pick(rng, dets));
      if (rng.uniform() < 0.5) s.tokens.push_back(pick(rng, adjs));
      s.tokens.push_back(pick(rng, nouns));
    };
    np();
    s.tokens.push_back(pick(rng, verbs));
    np();
    if (rng.uniform() < 0.5) {
      s.tokens.push_back(pick(rng, preps));
      np();
    }
    if (rng.uniform() < 0.3) s.tokens.push_back(pick(rng, advs));
    s.tokens.push_back(".");
    s.source_id = "grammar:" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sentence> slot_corpus(std::size_t n, std::size_t slots, std::uint64_t seed) {
  static constexpr std::array<double, 5> weights = {8, 4, 2, 1, 1};
  Rng rng(seed);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    for (std::size_t k = 0; k < slots; ++k) {
      const std::size_t j = rng.categorical(weights);
      s.tokens.push_back("s" + std::to_string(k) + "w" + std::to_string(j));
    }
    out.push_back(std::move(s));
  }
  return out;
}

const std::vector<std::string>& insert_fillers() {
  static const std::vector<std::string> fillers = {"very", "really", "quite", "indeed"};
  return fillers;
}

std::vector<SentencePair> insert_task(std::size_t n, std::uint64_t seed) {
  std::vector<std::string> content;
  for (int i = 0; i < 30; ++i) content.push_back("word" + std::to_string(i));
  Rng rng(seed);
  std::vector<SentencePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    SentencePair p;
    const std::size_t len = 4 + rng.index(5);
    for (std::size_t k = 0; k < len; ++k) {
      const std::string& w = pick(rng, content);
      p.kernel.tokens.push_back(w);
      p.original.tokens.push_back(w);
      if (rng.uniform() < 0.4) p.original.tokens.push_back(pick(rng, insert_fillers()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

Blobs gaussian_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation,
                     std::uint64_t seed) {
  Rng rng(seed);
  Blobs b;
  b.points.resize(static_cast<Eigen::Index>(k * per_cluster), static_cast<Eigen::Index>(dim));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i, ++row) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double centre = d == c % dim ? separation : 0.0;
        b.points(row, static_cast<Eigen::Index>(d)) = centre + rng.normal();
      }
      b.labels.push_back(c);
    }
  }
  return b;
}

std::vector<Sentence> topic_corpus(std::size_t topics, std::size_t per_topic, std::uint64_t seed,
                                   std::vector<std::size_t>* labels) {
  static const std::vector<std::string> glue = {"the", "a", "of", "and", "in", "is", "was", "to"};
  Rng rng(seed);
  std::vector<Sentence> out;
  for (std::size_t t = 0; t < topics; ++t) {
    std::vector<std::string> words;
    for (int i = 0; i < 12; ++i) words.push_back("topic" + std::to_string(t) + "term" + std::to_string(i));
    for (std::size_t i = 0; i < per_topic; ++i) {
      Sentence s;
      const std::size_t len = 6 + rng.index(5);
      for (std::size_t k = 0; k < len; ++k) {
        s.tokens.push_back(rng.uniform() < 0.4 ? pick(rng, glue) : pick(rng, words));
      }
      out.push_back(std::move(s));
      if (labels != nullptr) labels->push_back(t);
    }
  }
  return out;
}

}  // namespace ks::fixtures
