#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/service.hpp"

namespace ks {
namespace {

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto corpus = fixtures::grammar_corpus(300, 12);
    const Vocab vocab = Vocab::build(corpus);
    lm_ = std::make_shared<const TrigramLM>(build_lm(corpus, vocab, 1e-7));
    auto model = std::make_shared<ExpansionModel>(ModelDims{vocab.size(), 8, 12, 1}, vocab);
    model->initialize(3, 0.2);
    model_ = model;
  }
  static void TearDownTestSuite() {
    lm_.reset();
    model_.reset();
  }

  static inline std::shared_ptr<const TrigramLM> lm_;
  static inline std::shared_ptr<const ExpansionModel> model_;
};

TEST_F(ServiceTest, ExpandEchoesSeedsAndConfig) {
  const ExpansionService svc(lm_, model_);
  const nlohmann::json out = svc.expand(
      {{"sentence", "the dog sees a cat."}, {"method", "parabola_c"}, {"seed", 40}, {"candidate_count", 3}});
  EXPECT_EQ(out["seed"], 40);
  EXPECT_EQ(out["method"], "parabola_c");
  EXPECT_EQ(out["model"], "seq2seq");
  EXPECT_EQ(out["input"]["tokens"].size(), 6u);
  EXPECT_EQ(out["expected_length"], expected_length(6, DecodeConfig{}));
  ASSERT_EQ(out["candidates"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = out["candidates"][i];
    EXPECT_EQ(c["seed"], 40 + i);
    EXPECT_EQ(c["trace"]["tokens"], c["tokens"]);
    EXPECT_TRUE(c["filtered"].contains("flag"));
    EXPECT_TRUE(c["metrics"].contains("frechet"));
    EXPECT_EQ(c["metrics"]["output_len"], c["tokens"].size());
  }
  // Candidate i reproduces a single request made with seed + i.
  const nlohmann::json single = svc.expand({{"sentence", "the dog sees a cat."}, {"seed", 42}});
  EXPECT_EQ(single["candidates"][0]["tokens"], out["candidates"][2]["tokens"]);
}

TEST_F(ServiceTest, OverridesApply) {
  const ExpansionService svc(lm_, model_);
  const nlohmann::json out = svc.expand(
      {{"sentence", "a cat runs."}, {"method", "greedy"}, {"overrides", {{"max_len", 4}, {"top_k", 3}}}});
  EXPECT_EQ(out["config"]["max_len"], 4);
  EXPECT_EQ(out["config"]["top_k"], 3);
  EXPECT_LE(out["candidates"][0]["tokens"].size(), 4u);
  EXPECT_TRUE(out["candidates"][0]["log_prob"].is_number());
}

TEST_F(ServiceTest, LanguageModelOnlyAndTrigramBaseline) {
  const ExpansionService svc(lm_, nullptr);
  const nlohmann::json out = svc.expand({{"sentence", "the dog sees a cat."}, {"method", "random"}, {"seed", 1}});
  EXPECT_EQ(out["model"], "trigram_lm");
  const nlohmann::json base = svc.expand({{"sentence", "the dog sees a cat."}, {"method", "trigram"}, {"seed", 2}});
  EXPECT_EQ(base["method"], "trigram");
  const auto& c = base["candidates"][0];
  EXPECT_TRUE(c["terminated"].get<bool>());
  EXPECT_TRUE(c["log_prob"].is_null());
  EXPECT_GT(c["tokens"].size(), 6u);
  EXPECT_EQ(c["trace"]["tau"].size(), c["tokens"].size());
}

TEST_F(ServiceTest, FilteredReasons) {
  // After <s> <s> the corpus never ends a sentence, so a one-token budget
  // cannot terminate.
  const ExpansionService svc(lm_, nullptr);
  const nlohmann::json cut = svc.expand(
      {{"sentence", "the dog sees a cat."}, {"method", "greedy"}, {"overrides", {{"max_len", 1}}}});
  const auto& c = cut["candidates"][0];
  EXPECT_FALSE(c["terminated"].get<bool>());
  EXPECT_EQ(c["filtered"]["flag"], true);
  EXPECT_EQ(c["filtered"]["reason"], "non-terminating");
  const nlohmann::json full = svc.expand({{"sentence", "the dog sees a cat."}, {"method", "greedy"}});
  const auto& f = full["candidates"][0];
  ASSERT_TRUE(f["terminated"].get<bool>());
  EXPECT_EQ(f["filtered"]["flag"], !passes_repetitiveness_filter(f["tokens"].get<std::vector<std::string>>()));
}

TEST_F(ServiceTest, BadRequests) {
  const ExpansionService svc(lm_, model_);
  const std::vector<nlohmann::json> bad = {
      nlohmann::json::array(),
      {{"method", "greedy"}},
      {{"sentence", 5}},
      {{"sentence", "   "}},
      {{"sentence", "a b"}, {"method", "sideways"}},
      {{"sentence", "a b"}, {"candidate_count", 0}},
      {{"sentence", "a b"}, {"candidate_count", 17}},
      {{"sentence", "a b"}, {"seed", -1}},
      {{"sentence", "a b"}, {"overrides", {{"top_k", 0}}}},
      {{"sentence", "a b"}, {"overrides", {{"nonsense", 1}}}},
  };
  for (const auto& req : bad) {
    try {
      svc.expand(req);
      ADD_FAILURE() << req.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kBadRequest) << req.dump();
    }
  }
}

TEST_F(ServiceTest, UnreadyService) {
  const ExpansionService none(nullptr, nullptr);
  EXPECT_FALSE(none.ready());
  EXPECT_EQ(none.health()["status"], "unready");
  try {
    none.expand({{"sentence", "a cat runs."}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kServiceUnready);
  }
  const ExpansionService model_only(nullptr, model_);
  EXPECT_THROW(model_only.expand({{"sentence", "a cat runs."}, {"method", "trigram"}}), Error);
  EXPECT_THROW(model_only.compress({{"sentence", "a cat runs now."}}), Error);
}

TEST_F(ServiceTest, Compress) {
  const ExpansionService svc(lm_, model_);
  const nlohmann::json out = svc.compress({{"sentence", "the big dog sees a small cat."}, {"target_rate", 0.5}});
  EXPECT_EQ(out["input"]["tokens"].size(), 8u);
  EXPECT_DOUBLE_EQ(out["target_rate"].get<double>(), 0.5);
  const auto kept = out["kept"].get<std::vector<std::size_t>>();
  EXPECT_EQ(kept.size(), out["kernel"]["tokens"].size());
  EXPECT_EQ(kept.back(), 7u);
  EXPECT_DOUBLE_EQ(out["achieved_rate"].get<double>(), static_cast<double>(kept.size()) / 8.0);
  EXPECT_THROW(svc.compress({{"sentence", "cat"}}), Error);
  EXPECT_THROW(svc.compress({{"sentence", "a cat ran."}, {"target_rate", 0}}), Error);
  EXPECT_THROW(svc.compress({{"sentence", "a cat ran."}, {"target_rate", "half"}}), Error);
}

TEST_F(ServiceTest, MethodsAndHealth) {
  const ExpansionService svc(lm_, model_);
  const auto m = svc.methods();
  const auto tags = m["methods"].get<std::vector<std::string>>();
  for (const char* t : {"greedy", "beam", "random", "parabola_b2", "parabola_c", "exponential", "windowed", "trigram"}) {
    EXPECT_NE(std::find(tags.begin(), tags.end(), t), tags.end()) << t;
  }
  EXPECT_EQ(m["max_candidates"], 16);
  const auto h = svc.health();
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["lm_loaded"], true);
  EXPECT_EQ(h["model_loaded"], true);
  EXPECT_EQ(h["step_model"], "seq2seq");
}

TEST_F(ServiceTest, RouteStatusCodes) {
  const ExpansionService svc(lm_, model_);
  EXPECT_EQ(route(svc, "GET", "/api/health", "").status, 200);
  EXPECT_EQ(route(svc, "GET", "/api/methods", "").status, 200);
  EXPECT_EQ(route(svc, "POST", "/api/health", "").status, 405);
  EXPECT_EQ(route(svc, "GET", "/api/expand", "").status, 405);
  EXPECT_EQ(route(svc, "GET", "/nowhere", "").status, 404);
  const HttpReply ok = route(svc, "POST", "/api/expand", R"({"sentence": "a cat runs.", "seed": 3})");
  EXPECT_EQ(ok.status, 200);
  EXPECT_EQ(ok.body["seed"], 3);
  const HttpReply bad_json = route(svc, "POST", "/api/expand", "{not json");
  EXPECT_EQ(bad_json.status, 400);
  EXPECT_EQ(bad_json.body["code"], "bad-request");
  EXPECT_TRUE(bad_json.body["message"].is_string());
  const HttpReply bad_field = route(svc, "POST", "/api/compress", R"({"sentence": 1})");
  EXPECT_EQ(bad_field.status, 400);
  EXPECT_EQ(bad_field.body["code"], "bad-request");
  const ExpansionService none(nullptr, nullptr);
  const HttpReply unready = route(none, "POST", "/api/expand", R"({"sentence": "a cat runs."})");
  EXPECT_EQ(unready.status, 503);
  EXPECT_EQ(unready.body["code"], "service-unready");
  EXPECT_EQ(route(none, "GET", "/api/health", "").status, 200);
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(ErrorCode::kBadRequest), 400);
  EXPECT_EQ(http_status(ErrorCode::kEmptySentence), 400);
  EXPECT_EQ(http_status(ErrorCode::kServiceUnready), 503);
  EXPECT_EQ(http_status(ErrorCode::kIoError), 500);
}

TEST(ServiceConfig, FromConfigWithoutArtifacts) {
  KeyValueConfig c;
  c.set("decode.method", "beam");
  c.set("server.max_candidates", "4");
  const ExpansionService svc = ExpansionService::from_config(c);
  EXPECT_FALSE(svc.ready());
  EXPECT_EQ(svc.settings().decode.method, DecodeMethod::kBeam);
  EXPECT_EQ(svc.settings().max_candidates, 4u);
}

}  // namespace
}  // namespace ks
