#include "kernelsmith/textprep.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "kernelsmith/error.hpp"

namespace ks {
namespace {

// Abbreviations whose trailing period belongs to the token.
constexpr std::array<std::string_view, 27> kAbbreviations = {
    "mr.",   "mrs.",  "ms.",   "dr.",   "st.",   "jr.",   "sr.",
    "prof.", "rev.",  "gen.",  "col.",  "capt.", "lt.",   "sgt.",
    "gov.",  "sen.",  "rep.",  "vs.",   "etc.",  "e.g.",  "i.e.",
    "mt.",   "ft.",   "vol.",  "inc.",  "co.",   "ltd."};

bool is_abbreviation(std::string_view lowered) {
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lowered) !=
         kAbbreviations.end();
}

enum class UnitKind { kSpace, kWord, kPunct, kQuote, kApostrophe };

struct Unit {
  std::string text;
  UnitKind kind;
};

bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c) && c != '#';
}

// Splits UTF-8 into code points and classifies each. Lowercasing and digit
// mapping happen here.
std::vector<Unit> to_units(std::string_view raw) {
  std::vector<Unit> units;
  units.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (c < 0x80) {
      ++i;
      if (std::isspace(c) || c < 0x20 || c == 0x7f) {
        units.push_back({" ", UnitKind::kSpace});
      } else if (std::isdigit(c)) {
        units.push_back({"#", UnitKind::kWord});
      } else if (std::isalpha(c)) {
        units.push_back({std::string(1, static_cast<char>(std::tolower(c))),
                         UnitKind::kWord});
      } else if (c == '"' || c == '`') {
        units.push_back({"", UnitKind::kQuote});
      } else if (c == '\'') {
        units.push_back({"'", UnitKind::kApostrophe});
      } else if (c == '#') {
        units.push_back({"#", UnitKind::kWord});
      } else {
        units.push_back({std::string(1, static_cast<char>(c)), UnitKind::kPunct});
      }
      continue;
    }
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, raw.size() - i);
    std::string cp(raw.substr(i, len));
    i += len;
    if (cp == "\xE2\x80\x9C" || cp == "\xE2\x80\x9D" || cp == "\xE2\x80\x9E" ||
        cp == "\xC2\xAB" || cp == "\xC2\xBB") {
      units.push_back({"", UnitKind::kQuote});
    } else if (cp == "\xE2\x80\x98" || cp == "\xE2\x80\x99") {
      units.push_back({"'", UnitKind::kApostrophe});
    } else if (cp == "\xC2\xA0" || cp == "\xE2\x80\x89" || cp == "\xE2\x80\xAF") {
      units.push_back({" ", UnitKind::kSpace});
    } else if (cp == "\xE2\x80\xA6" || cp == "\xE2\x80\x94" || cp == "\xE2\x80\x93") {
      units.push_back({std::move(cp), UnitKind::kPunct});
    } else {
      units.push_back({std::move(cp), UnitKind::kWord});
    }
  }
  return units;
}

bool is_word(const std::vector<Unit>& u, std::size_t i) {
  return i < u.size() && u[i].kind == UnitKind::kWord;
}

// Apostrophes, hyphens and numeric separators join only when both
// neighbours are word characters.
bool joins_word(const std::vector<Unit>& u, std::size_t i) {
  if (i == 0 || i + 1 >= u.size()) return false;
  if (!is_word(u, i - 1) || !is_word(u, i + 1)) return false;
  switch (u[i].kind) {
    case UnitKind::kApostrophe:
      return true;
    case UnitKind::kPunct:
      if (u[i].text == "-") return true;
      if (u[i].text == "." || u[i].text == ",") {
        return u[i - 1].text == "#" && u[i + 1].text == "#";
      }
      return false;
    default:
      return false;
  }
}

void tokenize_chunk(const std::vector<Unit>& u, std::size_t begin,
                    std::size_t end, std::vector<std::string>& out) {
  std::size_t i = begin;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  while (i < end) {
    const Unit& unit = u[i];
    if (unit.kind == UnitKind::kWord || joins_word(u, i)) {
      word += unit.text;
      ++i;
      continue;
    }
    if (unit.kind == UnitKind::kQuote || unit.kind == UnitKind::kApostrophe) {
      // A dropped quote still separates words.
      flush();
      ++i;
      continue;
    }
    // Punctuation. An abbreviation keeps its period.
    if (unit.text == "." && !word.empty()) {
      std::string candidate = word + ".";
      std::size_t j = i + 1;
      // e.g. / i.e. carry internal periods: letter '.' letter '.'
      while (j + 1 < end && is_word(u, j) && u[j + 1].text == ".") {
        std::string extended = candidate + u[j].text + ".";
        bool prefix = std::any_of(kAbbreviations.begin(), kAbbreviations.end(),
                                  [&](std::string_view a) { return a.starts_with(extended); });
        if (!prefix) break;
        candidate = std::move(extended);
        j += 2;
      }
      if (is_abbreviation(candidate) && !is_word(u, j)) {
        out.push_back(std::move(candidate));
        word.clear();
        i = j;
        continue;
      }
    }
    flush();
    std::string run = unit.text;
    std::size_t j = i + 1;
    while (j < end && u[j].kind == UnitKind::kPunct && u[j].text == unit.text &&
           !joins_word(u, j)) {
      run += u[j].text;
      ++j;
    }
    out.push_back(std::move(run));
    i = j;
  }
  flush();
}

std::vector<std::string> tokenize(std::string_view raw) {
  const std::vector<Unit> units = to_units(raw);
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < units.size()) {
    while (i < units.size() && units[i].kind == UnitKind::kSpace) ++i;
    std::size_t j = i;
    while (j < units.size() && units[j].kind != UnitKind::kSpace) ++j;
    if (j > i) tokenize_chunk(units, i, j, tokens);
    i = j;
  }
  return tokens;
}

bool is_closing(char c) {
  return c == '"' || c == '\'' || c == ')' || c == ']';
}

bool is_opening(char c) {
  return c == '"' || c == '\'' || c == '(' || c == '[';
}

// Multi-byte curly quotes as seen in raw text.
std::size_t curly_quote_len(std::string_view s, std::size_t i) {
  if (i + 3 <= s.size() && s[i] == '\xE2' && s[i + 1] == '\x80' &&
      (s[i + 2] == '\x98' || s[i + 2] == '\x99' || s[i + 2] == '\x9C' ||
       s[i + 2] == '\x9D')) {
    return 3;
  }
  return 0;
}

bool period_ends_abbreviation(std::string_view raw, std::size_t period) {
  std::size_t start = period;
  while (start > 0 && !std::isspace(static_cast<unsigned char>(raw[start - 1]))) {
    --start;
  }
  std::string word(raw.substr(start, period - start));
  while (!word.empty() && is_opening(word.front())) word.erase(word.begin());
  if (word.size() == 1 && std::isupper(static_cast<unsigned char>(word[0]))) {
    return true;  // initial, as in "J. Smith"
  }
  std::string lowered;
  for (char c : word) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  lowered += '.';
  return is_abbreviation(lowered);
}

}  // namespace

Sentence normalize_sentence(std::string_view raw) {
  Sentence sentence;
  sentence.tokens = tokenize(raw);
  if (sentence.tokens.empty()) {
    throw Error(ErrorCode::kEmptySentence, "sentence is empty after normalization");
  }
  if (sentence.tokens.size() > kMaxSentenceTokens) {
    sentence.tokens.resize(kMaxSentenceTokens);
  }
  return sentence;
}

std::vector<Sentence> segment_text(std::string_view raw, std::string_view source_id) {
  std::vector<Sentence> out;
  auto emit = [&](std::size_t begin, std::size_t end) {
    if (end <= begin) return;
    std::vector<std::string> tokens = tokenize(raw.substr(begin, end - begin));
    if (tokens.empty()) return;
    if (tokens.size() > kMaxSentenceTokens) tokens.resize(kMaxSentenceTokens);
    out.push_back({std::move(tokens), std::string(source_id)});
  };

  std::size_t seg_start = 0;
  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    const std::size_t term = i;
    std::size_t j = i;
    while (j < raw.size() && (raw[j] == '.' || raw[j] == '!' || raw[j] == '?')) ++j;
    const bool single_period = (j - term == 1 && c == '.');
    for (;;) {
      if (j < raw.size() && is_closing(raw[j])) {
        ++j;
      } else if (std::size_t q = curly_quote_len(raw, j)) {
        j += q;
      } else {
        break;
      }
    }
    bool boundary = false;
    if (j >= raw.size()) {
      boundary = true;
    } else if (std::isspace(static_cast<unsigned char>(raw[j]))) {
      std::size_t k = j;
      while (k < raw.size() && std::isspace(static_cast<unsigned char>(raw[k]))) ++k;
      for (;;) {
        if (k < raw.size() && is_opening(raw[k])) {
          ++k;
        } else if (std::size_t q = curly_quote_len(raw, k)) {
          k += q;
        } else {
          break;
        }
      }
      boundary = k < raw.size() && std::isupper(static_cast<unsigned char>(raw[k]));
    }
    if (boundary && single_period && period_ends_abbreviation(raw, term)) {
      boundary = false;
    }
    if (boundary) {
      emit(seg_start, j);
      seg_start = j;
    }
    i = j;
  }
  emit(seg_start, raw.size());
  return out;
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStopwords = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you",
      "you're", "you've", "you'll", "you'd", "your", "yours", "yourself",
      "yourselves", "he", "him", "his", "himself", "she", "she's", "her",
      "hers", "herself", "it", "it's", "its", "itself", "they", "them",
      "their", "theirs", "themselves", "what", "which", "who", "whom", "this",
      "that", "that'll", "these", "those", "am", "is", "are", "was", "were",
      "be", "been", "being", "have", "has", "had", "having", "do", "does",
      "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because",
      "as", "until", "while", "of", "at", "by", "for", "with", "about",
      "against", "between", "into", "through", "during", "before", "after",
      "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
      "over", "under", "again", "further", "then", "once", "here", "there",
      "when", "where", "why", "how", "all", "any", "both", "each", "few",
      "more", "most", "other", "some", "such", "no", "nor", "not", "only",
      "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
      "just", "don", "don't", "should", "should've", "now", "d", "ll", "m",
      "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't",
      "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn",
      "hasn't", "haven", "haven't", "isn", "isn't", "ma", "mightn",
      "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won",
      "won't", "wouldn", "wouldn't"};
  return kStopwords;
}

bool is_stopword(std::string_view token) {
  return stopwords().contains(std::string(token));
}

double stopword_ratio(const Sentence& sentence) {
  if (sentence.empty()) return 0.0;
  std::size_t count = 0;
  for (const auto& t : sentence.tokens) count += is_stopword(t) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(sentence.size());
}

std::vector<Sentence> filter_corpus(const std::vector<Sentence>& sentences,
                                    std::size_t min_len, std::size_t max_len,
                                    StopwordRatioBounds bounds,
                                    const std::unordered_set<std::string>& blocklist) {
  if (min_len > max_len || bounds.lo > bounds.hi) {
    throw Error(ErrorCode::kInvalidArgument, "filter_corpus: invalid bounds");
  }
  std::vector<Sentence> kept;
  for (const auto& s : sentences) {
    if (s.size() < min_len || s.size() > max_len) continue;
    const double ratio = stopword_ratio(s);
    if (ratio < bounds.lo || ratio > bounds.hi) continue;
    const bool blocked = std::any_of(s.tokens.begin(), s.tokens.end(),
                                     [&](const std::string& t) { return blocklist.contains(t); });
    if (blocked) continue;
    kept.push_back(s);
  }
  return kept;
}

bool is_sentence_final(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
    return c == '.' || c == '!' || c == '?';
  });
}

bool is_punctuation(std::string_view token) {
  if (token == "\xE2\x80\xA6" || token == "\xE2\x80\x94" || token == "\xE2\x80\x93") return true;
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
    return is_ascii_punct(static_cast<unsigned char>(c));
  });
}

std::string detokenize(const std::vector<std::string>& tokens) {
  auto closing = [](const std::string& t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
      return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' ||
             c == ':' || c == ')' || c == ']' || c == '}' || c == '%';
    });
  };
  auto opening = [](const std::string& t) {
    return t == "(" || t == "[" || t == "{";
  };
  std::string out;
  bool glue_next = false;
  for (const auto& t : tokens) {
    if (!out.empty() && !glue_next && !closing(t)) out += ' ';
    out += t;
    glue_next = opening(t);
  }
  return out;
}

std::unordered_set<std::string> load_blocklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open blocklist: " + path);
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string word = line.substr(first, last - first + 1);
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words.insert(std::move(word));
  }
  return words;
}

void write_sentences(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << s.tokens[i];
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

std::vector<Sentence> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    Sentence s;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto b = line.find_first_not_of(" \t\r", pos);
      if (b == std::string::npos) break;
      const auto e = line.find_first_of(" \t\r", b);
      s.tokens.push_back(line.substr(b, e == std::string::npos ? std::string::npos : e - b));
      pos = e == std::string::npos ? line.size() : e;
    }
    if (s.tokens.empty()) continue;
    s.source_id = path + ":" + std::to_string(line_no);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ks
