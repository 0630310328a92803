#include "doctest.h"
#include "xstack/matrix.hpp"
#include "xstack/text.hpp"

using namespace xstack;

TEST_CASE("normalize: case, punctuation, whitespace") {
  CHECK(normalize("call Dr. ALICE-Smith now") == "call dr alice smith now");
  CHECK(normalize("  A.   Smith!! ") == "a smith");
  CHECK(normalize("") == "");
  CHECK(normalize("...") == "");
}

TEST_CASE("normalize: diacritics, combining marks, invisibles") {
  CHECK(normalize("C\xC3\xA9line H\xC3\xA4kimi") == "celine hakimi");        // precomposed
  CHECK(normalize("Ce\xCC\x81line") == "celine");                             // e + combining acute
  CHECK(normalize("\xC3\x86sir \xC5\x81ukasz") == "aesir lukasz");
  CHECK(normalize("Al\xE2\x80\x8B" "ice") == "alice");                        // zero-width space
  CHECK(normalize("Al\xC2\xAD" "ice") == "alice");                            // soft hyphen
  CHECK(normalize("alice\xE2\x80\x94smith") == "alice smith");                // em dash
  CHECK(normalize("\xEF\xBC\x81x") == "x");                                   // fullwidth '!'
}

TEST_CASE("normalize: offsets map back into the source") {
  const std::string src = "Hi, C\xC3\xA9line!";
  const auto n = normalize_with_offsets(src);
  REQUIRE(n.text == "hi celine");
  REQUIRE(n.source_begin.size() == n.text.size());
  const auto at = n.text.find("celine");
  CHECK(src.substr(n.source_begin[at], n.source_end[at + 5] - n.source_begin[at]) == "C\xC3\xA9line");
  CHECK(n.source_begin[at + 1] == n.source_begin[at] + 1);  // 'e' <- U+00E9 (two bytes)
  CHECK(n.source_end[at + 1] == n.source_begin[at + 1] + 2);
}

TEST_CASE("normalize: invalid utf-8 becomes a separator") {
  CHECK(normalize("ab\xFF" "cd") == "ab cd");
}

TEST_CASE("tokens and token-boundary matches") {
  CHECK(tokenize("Hello, World") == std::vector<std::string>{"hello", "world"});
  CHECK(find_token_matches("call dr alice smith now", "alice smith") == std::vector<std::size_t>{8});
  CHECK(find_token_matches("malice smithers", "alice smith").empty());
  CHECK(find_token_matches("ann ann", "ann") == std::vector<std::size_t>{0, 4});
  CHECK(find_token_matches("x", "").empty());
}

TEST_CASE("hash encoder: deterministic, unit norm, stop words") {
  HashTextEncoder enc(64, 0);
  const auto a = enc.encode("chief engineer at Acme Labs");
  REQUIRE(a);
  CHECK(a == enc.encode("chief engineer at Acme Labs"));
  CHECK(l2_norm(*a) == doctest::Approx(1.0));
  CHECK_FALSE(enc.encode("the of and"));
  CHECK_FALSE(enc.encode(""));
  CHECK(is_stop_word("the"));
  CHECK_FALSE(is_stop_word("engineer"));
}
