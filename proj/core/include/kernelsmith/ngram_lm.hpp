#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kernelsmith/textprep.hpp"
#include "kernelsmith/vocab.hpp"

namespace ks {

// Interpolated Kneser-Ney trigram model stored in back-off form: every
// retained n-gram carries its full interpolated probability and every
// context carries the weight applied to the next-lower order for unseen
// words. Immutable once built.
//
// The predicted event space is every vocabulary entry except <pad> and <s>;
// <unk> is a regular event so OOV input scores finitely.
class TrigramLM {
 public:
  struct Entry {
    TokenId word;
    double prob;
  };
  struct Context {
    std::vector<Entry> entries;  // sorted by word id
    double backoff = 1.0;
  };

  const Vocab& vocab() const { return vocab_; }

  // p(w | u v) and its natural log.
  double prob(TokenId u, TokenId v, TokenId w) const;
  double log_prob(TokenId u, TokenId v, TokenId w) const;

  // Full conditional distribution over vocabulary ids (length vocab().size()).
  std::vector<double> distribution(TokenId u, TokenId v) const;

  double unigram(TokenId w) const { return unigram_.at(static_cast<std::size_t>(w)); }
  double bigram_backoff(TokenId v) const;
  double trigram_backoff(TokenId u, TokenId v) const;

  // order in {1, 2, 3}
  std::size_t num_ngrams(int order) const;
  double discount(int order) const { return discounts_.at(static_cast<std::size_t>(order - 1)); }
  double prune_threshold() const { return prune_threshold_; }

  // Number of predicted events (vocab size minus <pad> and <s>).
  std::size_t event_count() const;

  // Iteration helpers for serialization and tests.
  const std::unordered_map<TokenId, Context>& bigram_contexts() const { return bigrams_; }
  const std::unordered_map<std::uint64_t, Context>& trigram_contexts() const { return trigrams_; }
  static std::uint64_t pack(TokenId u, TokenId v);
  static std::pair<TokenId, TokenId> unpack(std::uint64_t key);

  void write_arpa(std::ostream& out) const;
  static TrigramLM read_arpa(std::istream& in);
  void save_arpa(const std::string& path) const;
  static TrigramLM load_arpa(const std::string& path);

 private:
  friend TrigramLM build_lm(const std::vector<Sentence>&, const Vocab&, double);

  static double lookup(const Context& ctx, TokenId w, bool* found);
  double bigram_prob(TokenId v, TokenId w) const;

  Vocab vocab_;
  std::vector<double> unigram_;
  std::unordered_map<TokenId, Context> bigrams_;
  std::unordered_map<std::uint64_t, Context> trigrams_;
  std::array<double, 3> discounts_{0.0, 0.0, 0.0};
  double prune_threshold_ = 0.0;
};

// Interpolated KN with one discount per order, D = n1 / (n1 + 2 n2), over
// sentences padded as <s> <s> w1 .. wn </s>. Lower orders use continuation
// counts; the unigram level interpolates with a uniform distribution.
// With prune_threshold > 0, trigrams then bigrams whose removal costs less
// than the threshold in history-weighted log-likelihood (relative entropy)
// are dropped and context weights are recomputed so every conditional
// distribution still sums to one. Throws kInsufficientData when the corpus
// has fewer than three tokens.
TrigramLM build_lm(const std::vector<Sentence>& corpus, const Vocab& vocab,
                   double prune_threshold);

// Natural-log probability of tokens + </s> after a <s> <s> history. OOV
// tokens are scored as <unk>. Throws kEmptyInput on an empty list.
double score_sequence(const TrigramLM& lm, const std::vector<std::string>& tokens);
double score_ids(const TrigramLM& lm, const std::vector<TokenId>& ids);

// Next-token distribution for the history (u, v) with <unk> removed and
// the remainder renormalized. <pad> and <s> are always zero.
std::vector<double> next_token_distribution(const TrigramLM& lm, TokenId u, TokenId v);

// Trigram-frequency insertion baseline: inserts ceil((rate - 1) * len)
// tokens, one at a time, each at a uniformly chosen gap and drawn from the
// distribution conditioned on the two tokens left of the gap (</s> is never
// inserted). Deterministic for a given seed.
Sentence insert_trigram_words(const TrigramLM& lm, const Sentence& sentence,
                              double expansion_rate, std::uint64_t seed);

}  // namespace ks
