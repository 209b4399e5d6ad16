#include "kernelsmith/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kernelsmith/error.hpp"

namespace ks {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::optional<T> parse_number(const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw Error(ErrorCode::kParseError, "config key " + key + " expects " + kind + ", got '" + value + "'");
}

// JSON scalar for a raw config value: integer, then real, then string.
nlohmann::json scalar(const std::string& v) {
  if (auto i = parse_number<std::uint64_t>(v)) return *i;
  if (auto d = parse_number<double>(v)) return *d;
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::kParseError, origin + ":" + std::to_string(line_no) + ": empty key");
    c.set(key, trim(t.substr(eq + 1)));
  }
  return c;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read config " + path);
  return parse(in, path);
}

void KeyValueConfig::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = parse_number<double>(*v);
  if (!d) bad_value(key, *v, "a number");
  return *d;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = parse_number<std::size_t>(*v);
  if (!d) bad_value(key, *v, "a nonnegative integer");
  return *d;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = parse_number<std::uint64_t>(*v);
  if (!d) bad_value(key, *v, "a nonnegative integer");
  return *d;
}

void KeyValueConfig::check_known() const {
  for (const auto& [key, _] : entries_) {
    bool found = false;
    for (const auto& k : known_config_keys()) {
      if (k.key == key) {
        found = true;
        break;
      }
    }
    if (!found) throw Error(ErrorCode::kParseError, "unknown config key " + key);
  }
}

const std::vector<ConfigKey>& known_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"lm.path", "", "ARPA trigram model"},
      {"lm.prune_threshold", "1e-7", "relative-entropy pruning threshold (0 disables)"},
      {"lm.vocab_size", "0", "vocabulary cap including reserved symbols (0 = unbounded)"},
      {"lm.min_count", "1", "minimum token count for the vocabulary"},
      {"model.path", "", "seq2seq checkpoint"},
      {"model.embed", "32", "embedding size"},
      {"model.hidden", "64", "GRU hidden size"},
      {"model.layers", "1", "GRU layers"},
      {"blocklist.path", "", "one blocked word per line"},
      {"filter.min_len", "3", "shortest sentence kept"},
      {"filter.max_len", "50", "longest sentence kept"},
      {"filter.stopword_min", "0.1", "lowest stopword ratio kept"},
      {"filter.stopword_max", "0.9", "highest stopword ratio kept"},
      {"compress.target_rate", "0.6", "fraction of tokens kept"},
      {"compress.rate_tolerance", "1", "allowed kernel length deviation in tokens"},
      {"compress.min_reduction", "0.3", "minimum reduction for a training pair"},
      {"dataset.dev_holdout", "100", "pairs held out for development"},
      {"dataset.seed", "1", "split shuffle seed"},
      {"loss.lambda", "9", "focus factor for target tokens absent from the input"},
      {"train.steps", "2000", "optimizer steps"},
      {"train.learning_rate", "0.005", "Adam step size"},
      {"train.dropout", "0", "dropout on embeddings and attentional vectors"},
      {"train.batch_size", "8", "pairs per step"},
      {"train.seed", "1", "initialization and batching seed"},
      {"train.log_every", "50", "loss logging interval"},
      {"train.clip_norm", "5", "global gradient norm limit"},
      {"decode.method", "parabola_c", "greedy|beam|random|parabola_b2|parabola_c|exponential|windowed"},
      {"decode.temperature", "1", "fixed temperature for random"},
      {"decode.beam_width", "10", "beam width"},
      {"decode.top_k", "40", "sampling candidates per step"},
      {"decode.target_total_novelty", "", "novelty budget (empty = 0.1 x expected length)"},
      {"decode.expansion_factor", "1.65", "expected output length over input length"},
      {"decode.max_len", "50", "length limit"},
      {"decode.tau_floor", "0.1", "lowest corrected temperature"},
      {"decode.tau_ceiling", "2", "highest corrected temperature"},
      {"decode.b2_const", "0.5", "b^2 held fixed by parabola_c and windowed"},
      {"decode.c_const", "3", "c held fixed by parabola_b2"},
      {"decode.penalty_content", "15", "repeat penalty for content words"},
      {"decode.penalty_stopword", "10", "repeat penalty for stopwords"},
      {"decode.repeat_window", "5", "repeat penalty history"},
      {"decode.window_size", "3", "novelty window for the windowed curve"},
      {"decode.exp_kappa", "0.5", "scale of the exponential curve"},
      {"decode.exp_alpha", "1", "rate of the exponential curve"},
      {"decode.seed", "0", "sampling seed"},
      {"cluster.k", "10", "cluster count"},
      {"cluster.sweep", "", "comma-separated k values"},
      {"cluster.vectorizer", "tfidf", "tfidf|hashing"},
      {"cluster.max_features", "10000", "feature cap"},
      {"cluster.df_min", "1e-5", "lowest document frequency fraction"},
      {"cluster.df_max", "1e-2", "highest document frequency fraction"},
      {"cluster.lsa_dims", "200", "LSA components (0 = none)"},
      {"cluster.seed", "0", "k-means and sketch seed"},
      {"server.host", "127.0.0.1", "bind address"},
      {"server.port", "8080", "bind port"},
      {"server.max_candidates", "16", "largest candidate_count accepted"},
  };
  return keys;
}

std::optional<std::string> resolve_config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return std::string(env);
  std::error_code ec;
  if (std::filesystem::is_regular_file(kDefaultConfigFile, ec)) return std::string(kDefaultConfigFile);
  return std::nullopt;
}

FilterSettings filter_settings_from(const KeyValueConfig& c) {
  FilterSettings f;
  f.min_len = c.get_size("filter.min_len", f.min_len);
  f.max_len = c.get_size("filter.max_len", f.max_len);
  f.bounds.lo = c.get_double("filter.stopword_min", f.bounds.lo);
  f.bounds.hi = c.get_double("filter.stopword_max", f.bounds.hi);
  return f;
}

CompressionConfig compression_config_from(const KeyValueConfig& c) {
  CompressionConfig cc;
  cc.target_rate = c.get_double("compress.target_rate", cc.target_rate);
  cc.rate_tolerance = c.get_size("compress.rate_tolerance", cc.rate_tolerance);
  cc.min_reduction_for_dataset = c.get_double("compress.min_reduction", cc.min_reduction_for_dataset);
  cc.validate();
  return cc;
}

DecodeConfig decode_config_from(const KeyValueConfig& c) {
  nlohmann::json overrides = nlohmann::json::object();
  const std::string prefix = "decode.";
  for (const auto& [key, value] : c.entries()) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string field = key.substr(prefix.size());
    overrides[field] = value.empty() ? nlohmann::json(nullptr) : scalar(value);
  }
  DecodeConfig d;
  try {
    d = config_from_json(overrides);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError, std::string("config: ") + e.what());
  }
  d.validate();
  return d;
}

TrainConfig train_config_from(const KeyValueConfig& c) {
  TrainConfig t;
  t.steps = c.get_size("train.steps", t.steps);
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.dropout = c.get_double("train.dropout", t.dropout);
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.seed = c.get_u64("train.seed", t.seed);
  t.log_every = c.get_size("train.log_every", t.log_every);
  t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
  return t;
}

ModelDims model_dims_from(const KeyValueConfig& c) {
  ModelDims d;
  d.embed = c.get_size("model.embed", d.embed);
  d.hidden = c.get_size("model.hidden", d.hidden);
  d.layers = c.get_size("model.layers", d.layers);
  return d;
}

FocusedLossConfig loss_config_from(const KeyValueConfig& c) {
  FocusedLossConfig l;
  l.lambda = c.get_double("loss.lambda", l.lambda);
  l.validate();
  return l;
}

ClusterConfig cluster_config_from(const KeyValueConfig& c) {
  ClusterConfig k;
  k.k = c.get_size("cluster.k", k.k);
  const std::string vec = c.get_string("cluster.vectorizer", "tfidf");
  if (vec == "tfidf") {
    k.vectorizer = VectorizerKind::kTfidf;
  } else if (vec == "hashing") {
    k.vectorizer = VectorizerKind::kHashing;
  } else {
    bad_value("cluster.vectorizer", vec, "tfidf or hashing");
  }
  k.max_features = c.get_size("cluster.max_features", k.max_features);
  k.df_min = c.get_double("cluster.df_min", k.df_min);
  k.df_max = c.get_double("cluster.df_max", k.df_max);
  k.lsa_dims = c.get_size("cluster.lsa_dims", k.lsa_dims);
  k.seed = c.get_u64("cluster.seed", k.seed);
  return k;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) {
      const auto v = parse_number<std::size_t>(item);
      if (!v) throw Error(ErrorCode::kParseError, "expected a list of integers, got '" + text + "'");
      out.push_back(*v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace ks
