#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kernelsmith/clustering.hpp"
#include "kernelsmith/compressor.hpp"
#include "kernelsmith/sampler.hpp"
#include "kernelsmith/seq2seq.hpp"
#include "kernelsmith/textprep.hpp"

namespace ks {

// Flat "key = value" settings. Lines are trimmed; blank lines and lines
// starting with '#' are ignored; a later assignment replaces an earlier
// one. Keys are dotted section names such as decode.top_k.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return entries_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  // Throws kParseError naming the first key not in known_config_keys().
  void check_known() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct ConfigKey {
  std::string key;
  std::string fallback;
  std::string help;
};

const std::vector<ConfigKey>& known_config_keys();

inline constexpr const char* kConfigEnvVar = "KERNELSMITH_CONFIG";
inline constexpr const char* kDefaultConfigFile = "kernelsmith.conf";

// An explicit path wins, then $KERNELSMITH_CONFIG, then ./kernelsmith.conf
// when that file exists.
std::optional<std::string> resolve_config_path(const std::string& explicit_path);

struct FilterSettings {
  std::size_t min_len = 3;
  std::size_t max_len = kMaxSentenceTokens;
  StopwordRatioBounds bounds;
};

FilterSettings filter_settings_from(const KeyValueConfig& c);
CompressionConfig compression_config_from(const KeyValueConfig& c);
DecodeConfig decode_config_from(const KeyValueConfig& c);
TrainConfig train_config_from(const KeyValueConfig& c);
ModelDims model_dims_from(const KeyValueConfig& c);
FocusedLossConfig loss_config_from(const KeyValueConfig& c);
ClusterConfig cluster_config_from(const KeyValueConfig& c);

// Parses "1,2,3" into sizes; throws kParseError.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace ks
