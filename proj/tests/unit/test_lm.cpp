#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/random.hpp"
#include "kernelsmith/vocab.hpp"
#include "oracles.hpp"

namespace ks {
namespace {

std::vector<std::vector<std::string>> token_lists(const std::vector<Sentence>& corpus) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : corpus) out.push_back(s.tokens);
  return out;
}

std::vector<std::string> events_of(const Vocab& v) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (id != Vocab::kPad && id != Vocab::kBos) out.push_back(v.token(id));
  }
  return out;
}

TEST(Vocab, ReservedIdsAndFrequencyOrder) {
  const std::vector<Sentence> c = {fixtures::make_sentence("b a a c"), fixtures::make_sentence("b a")};
  const Vocab v = Vocab::build(c);
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocab::kUnk), "<unk>");
  EXPECT_EQ(v.token(Vocab::kBos), "<s>");
  EXPECT_EQ(v.token(Vocab::kEos), "</s>");
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.token(6), "c");
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  EXPECT_EQ(v.decode(v.encode({"c", "q"})), (std::vector<std::string>{"c", "<unk>"}));
}

TEST(Vocab, CapsAndMinimumCount) {
  const std::vector<Sentence> c = {fixtures::make_sentence("b a a c"), fixtures::make_sentence("b a")};
  EXPECT_EQ(Vocab::build(c, 5).size(), 5u);
  EXPECT_EQ(Vocab::build(c, 0, 2).size(), 6u);
  EXPECT_TRUE(Vocab::build(c).is_stopword(Vocab::build(c).id("a")));
}

TEST(Vocab, FromTokensRequiresReservedPrefix) {
  EXPECT_THROW(Vocab::from_tokens({"a", "b"}), Error);
  const Vocab v = Vocab::from_tokens({"<pad>", "<unk>", "<s>", "</s>", "x"});
  EXPECT_EQ(v.id("x"), 4);
}

TEST(KneserNey, MatchesCountOracleOnEveryTrigram) {
  const auto corpus = fixtures::grammar_corpus(150, 5);
  const Vocab vocab = Vocab::build(corpus);
  const TrigramLM lm = build_lm(corpus, vocab, 0.0);
  const oracle::KneserNey kn(token_lists(corpus), events_of(vocab));
  EXPECT_NEAR(lm.discount(1), kn.d1(), 1e-15);
  EXPECT_NEAR(lm.discount(2), kn.d2(), 1e-15);
  EXPECT_NEAR(lm.discount(3), kn.d3(), 1e-15);
  Rng rng(1);
  const auto events = events_of(vocab);
  for (int rep = 0; rep < 300; ++rep) {
    const auto& s = corpus[rng.index(corpus.size())].tokens;
    const std::size_t pos = rng.index(s.size() + 1);
    const std::string u = pos >= 2 ? s[pos - 2] : "<s>";
    const std::string v = pos >= 1 ? s[pos - 1] : "<s>";
    for (const auto& w : events) {
      ASSERT_NEAR(lm.prob(vocab.id(u), vocab.id(v), vocab.id(w)), kn.p3(u, v, w), 1e-12) << u << " " << v << " " << w;
    }
  }
  // Unseen histories back off all the way.
  EXPECT_NEAR(lm.prob(vocab.id("."), vocab.id("the"), vocab.id("cat")), kn.p3(".", "the", "cat"), 1e-12);
}

TEST(KneserNey, UnknownAndReservedEvents) {
  const auto corpus = fixtures::grammar_corpus(50, 6);
  const TrigramLM lm = build_lm(corpus, Vocab::build(corpus), 0.0);
  EXPECT_GT(lm.prob(Vocab::kBos, Vocab::kBos, Vocab::kUnk), 0.0);
  EXPECT_EQ(lm.prob(Vocab::kBos, Vocab::kBos, Vocab::kBos), 0.0);
  EXPECT_EQ(lm.prob(Vocab::kBos, Vocab::kBos, Vocab::kPad), 0.0);
  EXPECT_EQ(lm.event_count(), lm.vocab().size() - 2);
}

TEST(KneserNey, TooLittleData) {
  const std::vector<Sentence> tiny = {fixtures::make_sentence("a b")};
  try {
    build_lm(tiny, Vocab::build(tiny), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
  EXPECT_THROW(build_lm(fixtures::grammar_corpus(5, 1), Vocab::build(fixtures::grammar_corpus(5, 1)), -1.0), Error);
}

TEST(Pruning, DropsNgramsAndStaysNormalized) {
  const auto corpus = fixtures::grammar_corpus(400, 8);
  const Vocab vocab = Vocab::build(corpus);
  const TrigramLM full = build_lm(corpus, vocab, 0.0);
  const TrigramLM pruned = build_lm(corpus, vocab, 1e-4);
  EXPECT_LT(pruned.num_ngrams(3), full.num_ngrams(3));
  EXPECT_LE(pruned.num_ngrams(2), full.num_ngrams(2));
  EXPECT_EQ(pruned.num_ngrams(1), full.num_ngrams(1));
  for (std::size_t u = 0; u < vocab.size(); ++u) {
    for (std::size_t v = 0; v < vocab.size(); ++v) {
      double sum = 0.0;
      for (double p : pruned.distribution(static_cast<TokenId>(u), static_cast<TokenId>(v))) sum += p;
      ASSERT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Pruning, LargerThresholdPrunesMore) {
  const auto corpus = fixtures::grammar_corpus(400, 9);
  const Vocab vocab = Vocab::build(corpus);
  EXPECT_GE(build_lm(corpus, vocab, 1e-6).num_ngrams(3), build_lm(corpus, vocab, 1e-3).num_ngrams(3));
}

TEST(Arpa, FileRoundTripAndHeader) {
  const auto corpus = fixtures::grammar_corpus(120, 10);
  const TrigramLM lm = build_lm(corpus, Vocab::build(corpus), 1e-7);
  const auto path = (std::filesystem::temp_directory_path() / "ks_lm_test.arpa").string();
  lm.save_arpa(path);
  const TrigramLM back = TrigramLM::load_arpa(path);
  EXPECT_EQ(back.vocab().tokens(), lm.vocab().tokens());
  EXPECT_EQ(back.num_ngrams(2), lm.num_ngrams(2));
  EXPECT_EQ(back.num_ngrams(3), lm.num_ngrams(3));
  for (std::size_t u = 0; u < lm.vocab().size(); u += 3) {
    for (std::size_t v = 0; v < lm.vocab().size(); ++v) {
      const auto a = lm.distribution(static_cast<TokenId>(u), static_cast<TokenId>(v));
      const auto b = back.distribution(static_cast<TokenId>(u), static_cast<TokenId>(v));
      for (std::size_t w = 0; w < a.size(); ++w) ASSERT_NEAR(a[w], b[w], 1e-12);
    }
  }
  std::stringstream text;
  lm.write_arpa(text);
  EXPECT_NE(text.str().find("\\data\\"), std::string::npos);
  EXPECT_NE(text.str().find("\\3-grams:"), std::string::npos);
  EXPECT_NE(text.str().find("\\end\\"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Arpa, MalformedInputIsAParseError) {
  std::stringstream bad("not an arpa file\n");
  try {
    TrigramLM::read_arpa(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
  EXPECT_THROW(TrigramLM::load_arpa("/nonexistent/model.arpa"), Error);
}

TEST(Scoring, SumsLogProbabilitiesWithEndSymbol) {
  const auto corpus = fixtures::grammar_corpus(80, 11);
  const TrigramLM lm = build_lm(corpus, Vocab::build(corpus), 0.0);
  const std::vector<std::string> s = {"the", "cat", "saw"};
  const Vocab& v = lm.vocab();
  const double expected = lm.log_prob(Vocab::kBos, Vocab::kBos, v.id("the")) +
                          lm.log_prob(Vocab::kBos, v.id("the"), v.id("cat")) +
                          lm.log_prob(v.id("the"), v.id("cat"), v.id("saw")) +
                          lm.log_prob(v.id("cat"), v.id("saw"), Vocab::kEos);
  EXPECT_DOUBLE_EQ(score_sequence(lm, s), expected);
  EXPECT_TRUE(std::isfinite(score_sequence(lm, {"qqq", "zzz"})));
  EXPECT_THROW(score_sequence(lm, {}), Error);
}

TEST(NextToken, DropsUnknownAndRenormalizes) {
  const auto corpus = fixtures::grammar_corpus(80, 12);
  const TrigramLM lm = build_lm(corpus, Vocab::build(corpus), 0.0);
  const auto p = next_token_distribution(lm, Vocab::kBos, Vocab::kBos);
  EXPECT_EQ(p[Vocab::kUnk], 0.0);
  EXPECT_EQ(p[Vocab::kBos], 0.0);
  double sum = 0.0;
  for (double x : p) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(InsertBaseline, InsertsExpectedCountAndKeepsOriginalOrder) {
  const auto corpus = fixtures::grammar_corpus(200, 13);
  const TrigramLM lm = build_lm(corpus, Vocab::build(corpus), 1e-7);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sentence& s = corpus[seed];
    const Sentence out = insert_trigram_words(lm, s, 1.65, seed);
    EXPECT_EQ(out.size(), s.size() + static_cast<std::size_t>(std::ceil(0.65 * static_cast<double>(s.size()) - 1e-9)));
    // The input survives as a subsequence.
    std::size_t j = 0;
    for (const auto& t : out.tokens) {
      if (j < s.size() && t == s.tokens[j]) ++j;
    }
    EXPECT_EQ(j, s.size());
    for (const auto& t : out.tokens) {
      EXPECT_NE(t, "</s>");
      EXPECT_NE(t, "<unk>");
    }
  }
  EXPECT_EQ(insert_trigram_words(lm, corpus[0], 1.0, 3), corpus[0]);
  EXPECT_THROW(insert_trigram_words(lm, corpus[0], 0.5, 3), Error);
}

}  // namespace
}  // namespace ks
