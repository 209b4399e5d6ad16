#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ks {

inline constexpr std::size_t kMaxSentenceTokens = 50;

// A normalized sentence: lowercase tokens, no quotation marks, digits as '#',
// at most kMaxSentenceTokens tokens, no empty or whitespace-bearing tokens.
struct Sentence {
  std::vector<std::string> tokens;
  std::string source_id;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const Sentence&) const = default;
};

// Tokenization rules, applied to a UTF-8 string:
//   1. ASCII letters are lowercased; every ASCII digit becomes '#'.
//   2. Quotation marks (" ` “ ” „ « » and ‘ ’ ') are dropped; an apostrophe
//      survives only between two word characters (it's, gabriel's) and is
//      written as ASCII '.
//   3. Text is split on whitespace, then punctuation is detached. Runs of
//      the same punctuation character stay together ("...", "--").
//      A hyphen between word characters stays inside the word, as do '.'
//      and ',' between '#' characters (#.#, #,###).
//   4. Known abbreviations (mr., dr., e.g., ...) keep their periods.
//   5. Tokens past the 50th are discarded.
// Throws Error(kEmptySentence) when nothing survives.
Sentence normalize_sentence(std::string_view raw);

// Splits running text at . ! ? (with trailing closing quotes/brackets) that
// are followed by the end of text or whitespace and an uppercase letter,
// unless the period ends a known abbreviation or a single-letter initial.
// Segments that normalize to nothing are skipped.
std::vector<Sentence> segment_text(std::string_view raw,
                                   std::string_view source_id = {});

struct StopwordRatioBounds {
  double lo = 0.1;
  double hi = 0.9;
};

// Keeps sentences with min_len <= size <= max_len whose stopword ratio lies
// inside the bounds and that contain no blocklisted token.
std::vector<Sentence> filter_corpus(
    const std::vector<Sentence>& sentences, std::size_t min_len,
    std::size_t max_len, StopwordRatioBounds bounds = {},
    const std::unordered_set<std::string>& blocklist = {});

bool is_stopword(std::string_view token);
const std::unordered_set<std::string>& stopwords();
double stopword_ratio(const Sentence& sentence);

// True for tokens made only of sentence-final punctuation (. ! ?).
bool is_sentence_final(std::string_view token);
bool is_punctuation(std::string_view token);

// Space-join with punctuation attachment: closing punctuation (. , ! ? ; :
// ) ] } % and runs thereof) attaches to the previous token, opening
// brackets attach to the next one.
std::string detokenize(const std::vector<std::string>& tokens);

// One blocklisted word per line; blank lines and '#' comments ignored.
std::unordered_set<std::string> load_blocklist(const std::string& path);

// Corpus files hold one normalized sentence per line with tokens separated
// by single spaces. Reading skips blank lines and does not re-normalize;
// source_id becomes "<path>:<line>".
void write_sentences(const std::string& path, const std::vector<Sentence>& sentences);
std::vector<Sentence> read_sentences(const std::string& path);

}  // namespace ks
