#pragma once

// Synthetic corpora and data sets shared by unit and acceptance tests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kernelsmith/compressor.hpp"
#include "kernelsmith/textprep.hpp"

namespace ks::fixtures {

// Short English-like sentences from a small grammar, ending in '.'.
std::vector<Sentence> grammar_corpus(std::size_t n, std::uint64_t seed);

// Sentences of exactly `slots` tokens; slot i draws from its own five words
// ("s<i>w<j>") with weights 8:4:2:1:1, so a trigram model trained on the
// corpus is a position-aware chain with a skewed next-word distribution.
std::vector<Sentence> slot_corpus(std::size_t n, std::size_t slots, std::uint64_t seed);

// Kernel of 4 to 8 words from 30 content words; the original inserts one
// of four fillers after each kernel token with probability 0.4.
std::vector<SentencePair> insert_task(std::size_t n, std::uint64_t seed);
const std::vector<std::string>& insert_fillers();

struct Blobs {
  Eigen::MatrixXd points;  // rows are points
  std::vector<std::size_t> labels;
};

// k isotropic unit-variance Gaussians whose centres sit on the axes at
// distance `separation` from the origin.
Blobs gaussian_blobs(std::size_t k, std::size_t per_cluster, std::size_t dim, double separation,
                     std::uint64_t seed);

// Sentences about `topics` disjoint subjects, each built from its own
// word list plus shared stopwords; labels give the topic.
std::vector<Sentence> topic_corpus(std::size_t topics, std::size_t per_topic, std::uint64_t seed,
                                   std::vector<std::size_t>* labels);

Sentence make_sentence(const std::string& space_separated);

}  // namespace ks::fixtures
