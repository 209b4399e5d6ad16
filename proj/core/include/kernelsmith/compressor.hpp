#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/textprep.hpp"

namespace ks {

struct CompressionConfig {
  double target_rate = 0.6;          // fraction of tokens kept
  std::size_t rate_tolerance = 1;    // +/- tokens around round(rate * len)
  double min_reduction_for_dataset = 0.3;

  void validate() const;
};

struct SentencePair {
  Sentence kernel;
  Sentence original;

  bool operator==(const SentencePair&) const = default;
};

// Kept-length band [lo, hi] for a sentence of n tokens.
std::pair<std::size_t, std::size_t> kernel_length_band(std::size_t n, const CompressionConfig& config);

struct Compression {
  Sentence kernel;
  std::vector<std::size_t> kept;  // indices into the original, increasing
  double score = 0.0;             // score_sequence of the kernel
};

// Exact deletion compression: the order-preserving subsequence with length
// in the band that maximizes trigram log-likelihood (including </s>).
// Final sentence punctuation is always kept. target_rate == 1 returns the
// input unchanged. Throws kTooShort for sentences under two tokens.
Compression compress_detailed(const TrigramLM& lm, const Sentence& sentence,
                              const CompressionConfig& config);
Sentence compress(const TrigramLM& lm, const Sentence& sentence, const CompressionConfig& config);

struct ParallelCorpus {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
};

// Compresses every sentence, keeps pairs whose reduction reaches
// min_reduction_for_dataset, shuffles with the seed and moves the first
// dev_holdout pairs to dev. Throws kNoPairs when nothing (or nothing beyond
// the holdout) survives.
ParallelCorpus build_parallel_corpus(const std::vector<Sentence>& corpus, const TrigramLM& lm,
                                     const CompressionConfig& config, std::size_t dev_holdout,
                                     std::uint64_t seed);

double reduction(const SentencePair& pair);
double mean_compression_rate(const std::vector<SentencePair>& pairs);

// Dataset TSV: kernel TAB original, tokens space-joined, one pair per line.
void write_pairs_tsv(const std::string& path, const std::vector<SentencePair>& pairs);
std::vector<SentencePair> read_pairs_tsv(const std::string& path);

}  // namespace ks
