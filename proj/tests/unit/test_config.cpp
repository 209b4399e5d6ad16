#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kernelsmith/config.hpp"
#include "kernelsmith/error.hpp"

namespace ks {
namespace {

KeyValueConfig parse(const std::string& text) {
  std::istringstream in(text);
  return KeyValueConfig::parse(in);
}

TEST(KeyValueConfig, ParsesCommentsBlanksAndOverrides) {
  const auto c = parse("# header\n\n  lm.path =  /tmp/lm.arpa  \r\ndecode.top_k=5\ndecode.top_k = 7\nempty.value =\n");
  EXPECT_EQ(c.get_string("lm.path", ""), "/tmp/lm.arpa");
  EXPECT_EQ(c.get_size("decode.top_k", 0), 7u);
  EXPECT_EQ(c.get("empty.value"), std::string());
  EXPECT_FALSE(c.contains("missing"));
  EXPECT_EQ(c.get_string("missing", "dflt"), "dflt");
  EXPECT_EQ(c.entries().size(), 3u);
}

TEST(KeyValueConfig, ValueMayContainEquals) {
  EXPECT_EQ(parse("a = b=c\n").get_string("a", ""), "b=c");
}

TEST(KeyValueConfig, MalformedLinesReportLocation) {
  try {
    parse("a = 1\njust words\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(parse(" = 3\n"), Error);
}

TEST(KeyValueConfig, TypedGetters) {
  const auto c = parse("d = 2.5\nn = 12\nneg = -3\nword = abc\nbig = 18446744073709551615\n");
  EXPECT_DOUBLE_EQ(c.get_double("d", 0), 2.5);
  EXPECT_DOUBLE_EQ(c.get_double("n", 0), 12.0);
  EXPECT_EQ(c.get_size("n", 0), 12u);
  EXPECT_EQ(c.get_u64("big", 0), 18446744073709551615ull);
  EXPECT_DOUBLE_EQ(c.get_double("absent", 4.0), 4.0);
  EXPECT_THROW(c.get_size("neg", 0), Error);
  EXPECT_THROW(c.get_size("d", 0), Error);
  EXPECT_THROW(c.get_double("word", 0), Error);
}

TEST(KeyValueConfig, CheckKnown) {
  EXPECT_NO_THROW(parse("decode.top_k = 3\nserver.port = 9000\n").check_known());
  try {
    parse("decode.topk = 3\n").check_known();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("decode.topk"), std::string::npos);
  }
}

TEST(KeyValueConfig, LoadFromFile) {
  const auto path = (std::filesystem::temp_directory_path() / "ks_test.conf").string();
  {
    std::ofstream f(path);
    f << "train.steps = 10\n";
  }
  EXPECT_EQ(KeyValueConfig::load(path).get_size("train.steps", 0), 10u);
  std::filesystem::remove(path);
  try {
    KeyValueConfig::load(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(KnownKeys, FallbacksMatchDefaults) {
  // Every documented fallback parses through its helper without error.
  KeyValueConfig c;
  for (const auto& k : known_config_keys()) {
    if (!k.fallback.empty()) c.set(k.key, k.fallback);
  }
  EXPECT_NO_THROW(c.check_known());
  const DecodeConfig d = decode_config_from(c);
  const DecodeConfig def;
  EXPECT_EQ(d.method, def.method);
  EXPECT_EQ(d.top_k, def.top_k);
  EXPECT_EQ(d.beam_width, def.beam_width);
  EXPECT_DOUBLE_EQ(d.expansion_factor, def.expansion_factor);
  EXPECT_DOUBLE_EQ(d.penalty.content, def.penalty.content);
  EXPECT_DOUBLE_EQ(d.penalty.stopword, def.penalty.stopword);
  EXPECT_FALSE(d.target_total_novelty.has_value());
  const CompressionConfig cc = compression_config_from(c);
  EXPECT_DOUBLE_EQ(cc.target_rate, CompressionConfig{}.target_rate);
  const TrainConfig t = train_config_from(c);
  EXPECT_EQ(t.steps, TrainConfig{}.steps);
  EXPECT_DOUBLE_EQ(t.learning_rate, TrainConfig{}.learning_rate);
  EXPECT_EQ(model_dims_from(c).hidden, ModelDims{}.hidden);
  EXPECT_DOUBLE_EQ(loss_config_from(c).lambda, FocusedLossConfig{}.lambda);
  const ClusterConfig k = cluster_config_from(c);
  EXPECT_EQ(k.lsa_dims, ClusterConfig{}.lsa_dims);
  EXPECT_DOUBLE_EQ(k.df_max, ClusterConfig{}.df_max);
  const FilterSettings f = filter_settings_from(c);
  EXPECT_EQ(f.min_len, FilterSettings{}.min_len);
  EXPECT_EQ(f.max_len, FilterSettings{}.max_len);
}

TEST(Helpers, DecodeOverrides) {
  const auto c = parse("decode.method = beam\ndecode.beam_width = 3\ndecode.target_total_novelty = 0.7\n"
                       "decode.penalty_content = 2\n");
  const DecodeConfig d = decode_config_from(c);
  EXPECT_EQ(d.method, DecodeMethod::kBeam);
  EXPECT_EQ(d.beam_width, 3u);
  ASSERT_TRUE(d.target_total_novelty.has_value());
  EXPECT_DOUBLE_EQ(*d.target_total_novelty, 0.7);
  EXPECT_DOUBLE_EQ(d.penalty.content, 2.0);
  EXPECT_THROW(decode_config_from(parse("decode.method = sideways\n")), Error);
  EXPECT_THROW(decode_config_from(parse("decode.temperature = 0\n")), Error);
  EXPECT_THROW(decode_config_from(parse("decode.unknown_field = 1\n")), Error);
}

TEST(Helpers, OtherSections) {
  const auto c = parse("compress.target_rate = 0.5\ntrain.dropout = 0.25\nmodel.layers = 2\n"
                       "cluster.vectorizer = hashing\nfilter.stopword_max = 0.8\nloss.lambda = 0\n");
  EXPECT_DOUBLE_EQ(compression_config_from(c).target_rate, 0.5);
  EXPECT_DOUBLE_EQ(train_config_from(c).dropout, 0.25);
  EXPECT_EQ(model_dims_from(c).layers, 2u);
  EXPECT_EQ(cluster_config_from(c).vectorizer, VectorizerKind::kHashing);
  EXPECT_DOUBLE_EQ(filter_settings_from(c).bounds.hi, 0.8);
  EXPECT_DOUBLE_EQ(loss_config_from(c).lambda, 0.0);
  EXPECT_THROW(cluster_config_from(parse("cluster.vectorizer = bag\n")), Error);
  EXPECT_THROW(compression_config_from(parse("compress.target_rate = 2\n")), Error);
  EXPECT_THROW(loss_config_from(parse("loss.lambda = -1\n")), Error);
}

TEST(Helpers, ParseSizeList) {
  EXPECT_EQ(parse_size_list("2, 3,10"), (std::vector<std::size_t>{2, 3, 10}));
  EXPECT_EQ(parse_size_list(""), std::vector<std::size_t>{});
  EXPECT_EQ(parse_size_list("4,"), std::vector<std::size_t>{4});
  EXPECT_THROW(parse_size_list("1,x"), Error);
  EXPECT_THROW(parse_size_list("-2"), Error);
}

class ConfigPathTest : public ::testing::Test {
 protected:
  void SetUp() override {
    if (const char* v = std::getenv(kConfigEnvVar)) saved_ = v;
    unsetenv(kConfigEnvVar);
    original_cwd_ = std::filesystem::current_path();
    dir_ = std::filesystem::temp_directory_path() / "ks_config_path_test";
    std::filesystem::create_directories(dir_);
    std::filesystem::current_path(dir_);
  }
  void TearDown() override {
    std::filesystem::current_path(original_cwd_);
    std::filesystem::remove_all(dir_);
    if (saved_) {
      setenv(kConfigEnvVar, saved_->c_str(), 1);
    } else {
      unsetenv(kConfigEnvVar);
    }
  }
  std::optional<std::string> saved_;
  std::filesystem::path original_cwd_, dir_;
};

TEST_F(ConfigPathTest, Precedence) {
  EXPECT_EQ(resolve_config_path(""), std::nullopt);
  std::ofstream(kDefaultConfigFile) << "a = 1\n";
  EXPECT_EQ(resolve_config_path(""), std::string(kDefaultConfigFile));
  setenv(kConfigEnvVar, "/etc/from-env.conf", 1);
  EXPECT_EQ(resolve_config_path(""), std::string("/etc/from-env.conf"));
  EXPECT_EQ(resolve_config_path("explicit.conf"), std::string("explicit.conf"));
  setenv(kConfigEnvVar, "", 1);
  EXPECT_EQ(resolve_config_path(""), std::string(kDefaultConfigFile));
}

}  // namespace
}  // namespace ks
