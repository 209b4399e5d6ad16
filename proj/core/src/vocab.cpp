#include "kernelsmith/vocab.hpp"

#include <algorithm>

#include "kernelsmith/error.hpp"

namespace ks {

Vocab::Vocab() {
  for (std::string_view t : {kPadToken, kUnkToken, kBosToken, kEosToken}) add(t);
}

Vocab Vocab::build(const std::vector<Sentence>& corpus, std::size_t max_size,
                   std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab vocab;
  for (const auto& [token, count] : ranked) {
    if (count < min_count) break;
    if (max_size != 0 && vocab.size() >= max_size) break;
    vocab.add(token);
  }
  return vocab;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab vocab;
  if (tokens.size() < kNumReserved || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken ||
      tokens[kBos] != kBosToken || tokens[kEos] != kEosToken) {
    throw Error(ErrorCode::kParseError, "vocabulary does not start with the reserved symbols");
  }
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) {
      throw Error(ErrorCode::kParseError, "duplicate vocabulary entry: " + tokens[i]);
    }
    vocab.add(tokens[i]);
  }
  return vocab;
}

TokenId Vocab::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  stopword_.push_back(ks::is_stopword(token));
  index_.emplace(tokens_.back(), id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "token id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

}  // namespace ks
