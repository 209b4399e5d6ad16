#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"
#include "kernelsmith/sampler.hpp"
#include "kernelsmith/step_model.hpp"

namespace ks {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct CountState : StepState {
  std::size_t t = 0;
};

// Emits a fixed token sequence with probability one, then </s>.
class DeltaModel : public StepModel {
 public:
  DeltaModel(std::size_t v, std::vector<TokenId> seq) : v_(v), seq_(std::move(seq)) {}
  std::size_t vocab_size() const override { return v_; }
  StatePtr start(std::span<const TokenId>) const override { return std::make_shared<CountState>(); }
  StepOutput step(const StepState& s, TokenId) const override {
    const auto& c = static_cast<const CountState&>(s);
    std::vector<double> lp(v_, kNegInf);
    lp[c.t < seq_.size() ? static_cast<std::size_t>(seq_[c.t]) : Vocab::kEos] = 0.0;
    auto n = std::make_shared<CountState>();
    n->t = c.t + 1;
    return {lp, n};
  }

 private:
  std::size_t v_;
  std::vector<TokenId> seq_;
};

// A fixed, skewed distribution over the non-reserved ids; </s> optional.
class StaticModel : public StepModel {
 public:
  StaticModel(std::size_t v, bool allow_eos) : v_(v), allow_eos_(allow_eos) {}
  std::size_t vocab_size() const override { return v_; }
  StatePtr start(std::span<const TokenId>) const override { return std::make_shared<CountState>(); }
  StepOutput step(const StepState&, TokenId prev) const override {
    std::vector<double> w(v_, 0.0);
    for (std::size_t i = Vocab::kNumReserved; i < v_; ++i) w[i] = 1.0 / static_cast<double>(i - 2 + (prev % 3));
    if (allow_eos_) w[Vocab::kEos] = 0.15;
    double z = 0.0;
    for (double x : w) z += x;
    std::vector<double> lp(v_);
    for (std::size_t i = 0; i < v_; ++i) lp[i] = w[i] > 0 ? std::log(w[i] / z) : kNegInf;
    return {lp, std::make_shared<CountState>()};
  }

 private:
  std::size_t v_;
  bool allow_eos_;
};

Vocab word_vocab(int n) {
  std::vector<std::string> t = {"<pad>", "<unk>", "<s>", "</s>"};
  for (int i = 0; i < n; ++i) t.push_back("w" + std::to_string(i));
  t.push_back("the");
  return Vocab::from_tokens(t);
}

TEST(Methods, TagsRoundTrip) {
  for (DecodeMethod m : all_methods()) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(all_methods().size(), 7u);
  EXPECT_THROW(parse_method("nucleus"), Error);
}

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.top_k = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.tau_floor = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.expansion_factor = 0.9;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.penalty.content = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beam_width = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(DecodeConfig, JsonRoundTripAndOverlay) {
  DecodeConfig c;
  c.method = DecodeMethod::kWindowed;
  c.top_k = 7;
  c.target_total_novelty = 2.5;
  c.penalty.stopword = 4.0;
  c.seed = 99;
  const DecodeConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.method, c.method);
  EXPECT_EQ(back.top_k, 7u);
  EXPECT_EQ(back.target_total_novelty, 2.5);
  EXPECT_EQ(back.penalty.stopword, 4.0);
  EXPECT_EQ(back.seed, 99u);
  const DecodeConfig overlay = config_from_json({{"beam_width", 3}}, c);
  EXPECT_EQ(overlay.beam_width, 3u);
  EXPECT_EQ(overlay.top_k, 7u);
  EXPECT_THROW(config_from_json({{"bogus", 1}}), Error);
  EXPECT_THROW(config_from_json({{"top_k", "many"}}), Error);
}

TEST(RepeatPenalty, Examples) {
  const Vocab v = word_vocab(3);
  std::vector<double> lp(v.size(), kNegInf);
  for (TokenId i = 3; i < static_cast<TokenId>(v.size()); ++i) lp[i] = std::log(0.2);
  const TokenId content = v.id("w1");
  const TokenId stop = v.id("the");
  const auto out = apply_repeat_penalty(lp, std::vector<TokenId>{content, content, stop}, v, {});
  // Differences relative to an untouched token are exactly the penalties.
  const TokenId other = v.id("w0");
  EXPECT_NEAR(out[other] - out[content], 15.0, 1e-12);
  EXPECT_NEAR(out[other] - out[stop], 10.0, 1e-12);
  double z = 0.0;
  for (double x : out) z += std::exp(x);
  EXPECT_NEAR(z, 1.0, 1e-12);
  EXPECT_EQ(apply_repeat_penalty(lp, std::vector<TokenId>{}, v, {}), lp);
  EXPECT_EQ(apply_repeat_penalty(lp, std::vector<TokenId>{Vocab::kEos}, v, {}), lp);
}

TEST(Decode, DeltaModelForcesIdenticalOutputEverywhere) {
  const Vocab v = word_vocab(6);
  const std::vector<TokenId> seq = {4, 6, 5, 8, 9};
  const DeltaModel model(v.size(), seq);
  const std::vector<TokenId> in = {4, 5, 6};
  for (DecodeMethod m : all_methods()) {
    DecodeConfig c;
    c.method = m;
    const DecodeResult r = decode(model, v, in, c);
    EXPECT_EQ(r.ids, seq) << to_string(m);
    EXPECT_TRUE(r.terminated);
    EXPECT_EQ(r.trace.total_novelty, 0.0);
    EXPECT_EQ(r.trace.steps.size(), seq.size());
    EXPECT_DOUBLE_EQ(r.log_prob, 0.0);
  }
}

TEST(Decode, TraceInvariantsForSampledMethods) {
  const Vocab v = word_vocab(30);
  const StaticModel model(v.size(), true);
  const std::vector<TokenId> in = {4, 5, 6, 7, 8, 9};
  for (DecodeMethod m : {DecodeMethod::kRandom, DecodeMethod::kParabolaB2, DecodeMethod::kParabolaC,
                         DecodeMethod::kExponential, DecodeMethod::kWindowed}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      DecodeConfig c;
      c.method = m;
      c.seed = seed;
      c.top_k = 10;
      const DecodeResult r = decode(model, v, in, c);
      ASSERT_EQ(r.trace.steps.size(), r.ids.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < r.ids.size(); ++i) {
        const TraceStep& s = r.trace.steps[i];
        EXPECT_EQ(s.token, r.ids[i]);
        EXPECT_GE(s.tau, c.tau_floor);
        EXPECT_LE(s.tau, c.tau_ceiling);
        EXPECT_GE(s.novelty, 0.0);
        EXPECT_LT(s.novelty, 1.0);
        EXPECT_LE(s.candidates.size(), c.top_k);
        sum += s.novelty;
      }
      EXPECT_EQ(r.trace.total_novelty, sum);
    }
  }
}

TEST(Decode, WindowAccumulatorSumsRecentNovelty) {
  const Vocab v = word_vocab(30);
  const StaticModel model(v.size(), true);
  DecodeConfig c;
  c.method = DecodeMethod::kWindowed;
  c.window_size = 3;
  c.seed = 4;
  const DecodeResult r = decode(model, v, std::vector<TokenId>{4, 5, 6, 7}, c);
  for (std::size_t i = 0; i < r.trace.steps.size(); ++i) {
    double expected = 0.0;
    for (std::size_t j = i + 1 > 3 ? i - 2 : 0; j <= i; ++j) expected += r.trace.steps[j].novelty;
    EXPECT_NEAR(r.trace.steps[i].window, expected, 1e-12);
  }
}

TEST(Decode, NonTerminatingIsFlagged) {
  const Vocab v = word_vocab(8);
  const StaticModel model(v.size(), false);
  for (DecodeMethod m : all_methods()) {
    DecodeConfig c;
    c.method = m;
    c.max_len = 12;
    c.beam_width = 3;
    const DecodeResult r = decode(model, v, std::vector<TokenId>{4, 5}, c);
    EXPECT_FALSE(r.terminated) << to_string(m);
    EXPECT_EQ(r.ids.size(), 12u) << to_string(m);
  }
}

TEST(Decode, RepeatPenaltyDiscouragesImmediateRepeats) {
  const Vocab v = word_vocab(30);
  const StaticModel model(v.size(), false);
  DecodeConfig c;
  c.method = DecodeMethod::kRandom;
  c.max_len = 40;
  std::size_t repeats = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    c.seed = seed;
    const DecodeResult r = decode(model, v, std::vector<TokenId>{4}, c);
    for (std::size_t i = 1; i < r.ids.size(); ++i) repeats += r.ids[i] == r.ids[i - 1] ? 1 : 0;
  }
  EXPECT_EQ(repeats, 0u);
}

TEST(Beam, RanksByLengthNormalizedScore) {
  const auto corpus = fixtures::grammar_corpus(300, 61);
  const Vocab v = Vocab::build(corpus);
  const LmStepModel model(std::make_shared<const TrigramLM>(build_lm(corpus, v, 1e-7)));
  DecodeConfig c;
  c.beam_width = 5;
  const auto hyps = beam_search(model, v.encode(corpus[0].tokens), c);
  ASSERT_FALSE(hyps.empty());
  EXPECT_LE(hyps.size(), 5u);
  for (std::size_t i = 1; i < hyps.size(); ++i) EXPECT_GE(hyps[i - 1].normalized(), hyps[i].normalized());
  for (const auto& h : hyps) EXPECT_TRUE(h.finished);
  const Hypothesis h{{4, 5}, -3.0, true};
  EXPECT_DOUBLE_EQ(h.normalized(), -1.0);
}

TEST(Beam, WidthOneEqualsGreedy) {
  const auto corpus = fixtures::grammar_corpus(300, 62);
  const Vocab v = Vocab::build(corpus);
  const LmStepModel model(std::make_shared<const TrigramLM>(build_lm(corpus, v, 1e-7)));
  for (std::size_t i = 0; i < 10; ++i) {
    DecodeConfig g;
    g.method = DecodeMethod::kGreedy;
    DecodeConfig b = g;
    b.method = DecodeMethod::kBeam;
    b.beam_width = 1;
    const auto in = v.encode(corpus[i].tokens);
    EXPECT_EQ(decode(model, v, in, g).ids, decode(model, v, in, b).ids);
  }
}

// Direct transcription of the definition: some block of at least 10 tokens
// starting at i reappears starting at j with 0 < j - i <= 15.
bool repetitive_by_definition(const std::vector<std::string>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 1; j <= i + 15 && j < t.size(); ++j) {
      for (std::size_t len = 10; j + len <= t.size(); ++len) {
        if (std::equal(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + len),
                       t.begin() + static_cast<long>(j))) {
          return true;
        }
      }
    }
  }
  return false;
}

TEST(RepetitivenessFilter, AgreesWithDefinitionOnRandomSequences) {
  Rng rng(31);
  std::size_t rejected = 0;
  for (int rep = 0; rep < 3000; ++rep) {
    std::vector<std::string> t;
    const std::size_t n = rng.index(45);
    const std::size_t alphabet = 1 + rng.index(3);
    // Periodic sequences with occasional noise exercise the boundary.
    const std::size_t period = 1 + rng.index(18);
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(rng.uniform() < 0.05 ? "x" + std::to_string(rng.index(alphabet))
                                       : "p" + std::to_string(i % period));
    }
    const bool expected = repetitive_by_definition(t);
    rejected += expected ? 1 : 0;
    EXPECT_EQ(passes_repetitiveness_filter(t), !expected);
  }
  EXPECT_GT(rejected, 100u);
}

TEST(TraceJson, HasParallelArrays) {
  const Vocab v = word_vocab(30);
  const StaticModel model(v.size(), true);
  DecodeConfig c;
  c.seed = 2;
  const DecodeResult r = decode(model, v, std::vector<TokenId>{4, 5, 6}, c);
  const nlohmann::json j = trace_to_json(r.trace, v);
  const std::size_t n = r.ids.size();
  EXPECT_EQ(j["tokens"].size(), n);
  EXPECT_EQ(j["tau"].size(), n);
  EXPECT_EQ(j["novelty"].size(), n);
  EXPECT_EQ(j["window"].size(), n);
  EXPECT_EQ(j["candidates"].size(), n);
  EXPECT_DOUBLE_EQ(j["total_novelty"].get<double>(), r.trace.total_novelty);
}

}  // namespace
}  // namespace ks
