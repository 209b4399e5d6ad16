#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "kernelsmith/compressor.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"
#include "oracles.hpp"

namespace ks {
namespace {

class CompressorTest : public ::testing::Test {
 protected:
  CompressorTest()
      : corpus_(fixtures::grammar_corpus(400, 30)),
        vocab_(Vocab::build(corpus_)),
        lm_(build_lm(corpus_, vocab_, 1e-7)) {}

  std::vector<Sentence> corpus_;
  Vocab vocab_;
  TrigramLM lm_;
};

TEST(KernelBand, RoundsTargetAndClamps) {
  CompressionConfig c;
  c.target_rate = 0.6;
  EXPECT_EQ(kernel_length_band(10, c), (std::pair<std::size_t, std::size_t>{5, 7}));
  EXPECT_EQ(kernel_length_band(2, c), (std::pair<std::size_t, std::size_t>{1, 2}));
  c.rate_tolerance = 0;
  EXPECT_EQ(kernel_length_band(10, c), (std::pair<std::size_t, std::size_t>{6, 6}));
  c.target_rate = 1.0;
  EXPECT_EQ(kernel_length_band(7, c), (std::pair<std::size_t, std::size_t>{7, 7}));
}

TEST(CompressionConfig, Validation) {
  CompressionConfig c;
  c.target_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.target_rate = 1.2;
  EXPECT_THROW(c.validate(), Error);
  c.target_rate = 0.5;
  c.min_reduction_for_dataset = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST_F(CompressorTest, MatchesExhaustiveSearch) {
  Rng rng(4);
  CompressionConfig cc;
  for (double rate : {0.4, 0.6, 0.8}) {
    cc.target_rate = rate;
    for (std::size_t i = 0; i < 40; ++i) {
      Sentence s = corpus_[i];
      if (s.size() > 12) continue;
      if (rng.uniform() < 0.3) s.tokens.back() = "barn";  // no final punctuation, unseen word
      const Compression c = compress_detailed(lm_, s, cc);
      const auto [best, keep] = oracle::brute_force_compress(lm_, s, cc);
      EXPECT_EQ(c.score, best);
      EXPECT_DOUBLE_EQ(c.score, score_sequence(lm_, c.kernel.tokens));
      const auto [lo, hi] = kernel_length_band(s.size(), cc);
      EXPECT_GE(c.kernel.size(), lo);
      EXPECT_LE(c.kernel.size(), hi);
    }
  }
}

TEST_F(CompressorTest, KeepsFinalPunctuationAndOrder) {
  CompressionConfig cc;
  cc.target_rate = 0.4;
  for (std::size_t i = 0; i < 60; ++i) {
    const Compression c = compress_detailed(lm_, corpus_[i], cc);
    ASSERT_FALSE(c.kept.empty());
    EXPECT_EQ(c.kept.back(), corpus_[i].size() - 1);
    EXPECT_EQ(c.kernel.tokens.back(), ".");
    for (std::size_t k = 1; k < c.kept.size(); ++k) EXPECT_LT(c.kept[k - 1], c.kept[k]);
    for (std::size_t k = 0; k < c.kept.size(); ++k) EXPECT_EQ(c.kernel.tokens[k], corpus_[i].tokens[c.kept[k]]);
  }
}

TEST_F(CompressorTest, IdentityAndTooShort) {
  CompressionConfig cc;
  cc.target_rate = 1.0;
  EXPECT_EQ(compress(lm_, corpus_[0], cc).tokens, corpus_[0].tokens);
  cc.target_rate = 0.5;
  try {
    compress(lm_, fixtures::make_sentence("cat"), cc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooShort);
  }
}

TEST_F(CompressorTest, ParallelCorpusFiltersAndSplits) {
  CompressionConfig cc;
  cc.target_rate = 0.6;
  const ParallelCorpus pc = build_parallel_corpus(corpus_, lm_, cc, 25, 1);
  EXPECT_EQ(pc.dev.size(), 25u);
  EXPECT_FALSE(pc.train.empty());
  for (const auto* part : {&pc.train, &pc.dev}) {
    for (const auto& p : *part) EXPECT_GE(reduction(p), cc.min_reduction_for_dataset - 1e-12);
  }
  const double rate = mean_compression_rate(pc.train);
  EXPECT_GT(rate, 0.0);
  EXPECT_LT(rate, 0.71);
  const ParallelCorpus other = build_parallel_corpus(corpus_, lm_, cc, 25, 2);
  EXPECT_NE(other.dev, pc.dev);
}

TEST_F(CompressorTest, NoPairsWhenNothingSurvives) {
  CompressionConfig cc;
  cc.target_rate = 0.9;
  cc.min_reduction_for_dataset = 0.5;
  try {
    build_parallel_corpus(corpus_, lm_, cc, 5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoPairs);
  }
}

TEST(PairsTsv, RoundTrip) {
  const auto pairs = fixtures::insert_task(10, 2);
  const auto path = (std::filesystem::temp_directory_path() / "ks_pairs.tsv").string();
  write_pairs_tsv(path, pairs);
  const auto back = read_pairs_tsv(path);
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(back[i].kernel.tokens, pairs[i].kernel.tokens);
    EXPECT_EQ(back[i].original.tokens, pairs[i].original.tokens);
  }
  std::filesystem::remove(path);
}

TEST(PairsTsv, Reduction) {
  SentencePair p{fixtures::make_sentence("a b"), fixtures::make_sentence("a x b y")};
  EXPECT_DOUBLE_EQ(reduction(p), 0.5);
  EXPECT_DOUBLE_EQ(mean_compression_rate({p}), 0.5);
}

}  // namespace
}  // namespace ks
