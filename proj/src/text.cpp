#include "xstack/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "xstack/hash.hpp"

namespace xstack {
namespace {

struct FoldRange {
  char32_t first;
  char32_t last;
  const char* base;
};

// Latin-1 Supplement and Latin Extended-A letters folded to ASCII.
constexpr std::array<FoldRange, 58> kFolds{{
    {0xC0, 0xC5, "a"},   {0xC6, 0xC6, "ae"},  {0xC7, 0xC7, "c"},   {0xC8, 0xCB, "e"},   {0xCC, 0xCF, "i"},
    {0xD0, 0xD0, "d"},   {0xD1, 0xD1, "n"},   {0xD2, 0xD6, "o"},   {0xD8, 0xD8, "o"},   {0xD9, 0xDC, "u"},
    {0xDD, 0xDD, "y"},   {0xDE, 0xDE, "th"},  {0xDF, 0xDF, "ss"},  {0xE0, 0xE5, "a"},   {0xE6, 0xE6, "ae"},
    {0xE7, 0xE7, "c"},   {0xE8, 0xEB, "e"},   {0xEC, 0xEF, "i"},   {0xF0, 0xF0, "d"},   {0xF1, 0xF1, "n"},
    {0xF2, 0xF6, "o"},   {0xF8, 0xF8, "o"},   {0xF9, 0xFC, "u"},   {0xFD, 0xFD, "y"},   {0xFE, 0xFE, "th"},
    {0xFF, 0xFF, "y"},   {0x100, 0x105, "a"}, {0x106, 0x10D, "c"}, {0x10E, 0x111, "d"}, {0x112, 0x11B, "e"},
    {0x11C, 0x123, "g"}, {0x124, 0x127, "h"}, {0x128, 0x131, "i"}, {0x132, 0x133, "ij"}, {0x134, 0x135, "j"},
    {0x136, 0x138, "k"}, {0x139, 0x142, "l"}, {0x143, 0x148, "n"}, {0x149, 0x149, "n"}, {0x14A, 0x14B, "n"},
    {0x14C, 0x151, "o"}, {0x152, 0x153, "oe"}, {0x154, 0x159, "r"}, {0x15A, 0x161, "s"}, {0x162, 0x167, "t"},
    {0x168, 0x173, "u"}, {0x174, 0x175, "w"}, {0x176, 0x178, "y"}, {0x179, 0x17E, "z"}, {0x17F, 0x17F, "s"},
    {0x180, 0x180, "b"}, {0x181, 0x181, "b"}, {0x187, 0x188, "c"}, {0x189, 0x18A, "d"}, {0x191, 0x192, "f"},
    {0x197, 0x197, "i"}, {0x1A0, 0x1A1, "o"}, {0x1AF, 0x1B0, "u"},
}};

const char* fold(char32_t cp) {
  for (const auto& r : kFolds)
    if (cp >= r.first && cp <= r.last) return r.base;
  return nullptr;
}

bool is_combining_mark(char32_t cp) { return cp >= 0x300 && cp <= 0x36F; }

// Soft hyphen, zero-width space/joiners, word joiner, BOM: invisible, so they
// must not split a word ("Al\u200Bice" reads as "Alice").
bool is_invisible(char32_t cp) {
  return cp == 0xAD || (cp >= 0x200B && cp <= 0x200F) || (cp >= 0x2060 && cp <= 0x2064) || cp == 0xFEFF;
}

bool is_separator(char32_t cp) {
  return (cp >= 0x80 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2000 && cp <= 0x206F) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFF0F);
}

// Decodes one UTF-8 code point at `pos`; returns its byte length, or 0 for an
// invalid sequence.
std::size_t decode(std::string_view s, std::size_t pos, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  std::size_t len = 0;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (pos + len > s.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

}  // namespace

NormalizedText normalize_with_offsets(std::string_view source) {
  NormalizedText out;
  auto emit = [&out](char c, std::size_t b, std::size_t e) {
    out.text.push_back(c);
    out.source_begin.push_back(b);
    out.source_end.push_back(e);
  };
  auto separator = [&](std::size_t b, std::size_t e) {
    if (!out.text.empty() && out.text.back() != ' ') emit(' ', b, e);
  };

  std::size_t pos = 0;
  while (pos < source.size()) {
    char32_t cp = 0;
    const std::size_t len = decode(source, pos, cp);
    if (len == 0) {
      separator(pos, pos + 1);
      ++pos;
      continue;
    }
    const std::size_t end = pos + len;
    if (cp < 0x80) {
      const auto c = static_cast<unsigned char>(cp);
      if (std::isalnum(c) != 0)
        emit(static_cast<char>(std::tolower(c)), pos, end);
      else
        separator(pos, end);
    } else if (is_combining_mark(cp) || is_invisible(cp)) {
      // Fold into the preceding letter's source span.
      if (!out.text.empty() && out.text.back() != ' ') out.source_end.back() = end;
    } else if (const char* base = fold(cp)) {
      for (const char* p = base; *p != '\0'; ++p) emit(*p, pos, end);
    } else if (is_separator(cp)) {
      separator(pos, end);
    } else {
      for (std::size_t i = pos; i < end; ++i) emit(source[i], pos, end);
    }
    pos = end;
  }
  if (!out.text.empty() && out.text.back() == ' ') {
    out.text.pop_back();
    out.source_begin.pop_back();
    out.source_end.pop_back();
  }
  return out;
}

std::string normalize(std::string_view source) { return normalize_with_offsets(source).text; }

std::vector<std::string> tokenize(std::string_view source) {
  const std::string norm = normalize(source);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

std::vector<std::size_t> find_token_matches(std::string_view haystack, std::string_view needle) {
  std::vector<std::size_t> out;
  if (needle.empty()) return out;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left = pos == 0 || haystack[pos - 1] == ' ';
    const std::size_t end = pos + needle.size();
    const bool right = end == haystack.size() || haystack[end] == ' ';
    if (left && right) out.push_back(pos);
  }
  return out;
}

bool is_stop_word(std::string_view token) {
  static constexpr std::array<std::string_view, 48> kStop{
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",    "can",  "do",   "for",  "from",
      "has",  "have", "he",   "her",  "his",  "i",    "in",   "is",    "it",   "its",  "me",   "my",
      "of",   "on",   "or",   "she",  "so",   "that", "the",  "their", "them", "they", "this", "to",
      "was",  "we",   "what", "who",  "with", "you",  "your", "about", "tell", "know", "any",  "there"};
  return std::find(kStop.begin(), kStop.end(), token) != kStop.end();
}

std::optional<std::vector<double>> HashTextEncoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  return encode_tokens(tokens);
}

std::optional<std::vector<double>> HashTextEncoder::encode_tokens(std::span<const std::string> tokens) const {
  std::vector<double> v(dim_, 0.0);
  bool any = false;
  for (const auto& t : tokens) {
    if (t.empty() || is_stop_word(t)) continue;
    v[stable_hash64(t, seed_) % dim_] += 1.0;
    any = true;
  }
  if (!any) return std::nullopt;
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace xstack
