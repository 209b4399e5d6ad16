#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kernelsmith/textprep.hpp"

namespace ks {

using TokenId = std::int32_t;

// Token <-> id bijection with four reserved ids at the front.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kNumReserved = 4;

  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";

  Vocab();

  // Most frequent tokens first (ties broken lexicographically). max_size
  // counts the reserved entries; 0 means unbounded.
  static Vocab build(const std::vector<Sentence>& corpus,
                     std::size_t max_size = 0, std::size_t min_count = 1);

  // Tokens in id order; the first four must be the reserved symbols.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  // Adds a token if absent and returns its id.
  TokenId add(std::string_view token);

  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool is_stopword(TokenId id) const { return stopword_.at(static_cast<std::size_t>(id)); }
  bool is_reserved(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < kNumReserved; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> stopword_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace ks
