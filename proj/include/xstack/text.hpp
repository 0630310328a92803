#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xstack {

// Normalised text with a map back into the source bytes. Normalisation:
// ASCII case-fold, Latin diacritics folded to their base letters, combining
// marks and zero-width characters dropped, punctuation and symbols turned
// into spaces, whitespace collapsed and trimmed.
struct NormalizedText {
  std::string text;
  // Source byte range [source_begin[i], source_end[i]) behind text[i].
  std::vector<std::size_t> source_begin;
  std::vector<std::size_t> source_end;
};

NormalizedText normalize_with_offsets(std::string_view source);
std::string normalize(std::string_view source);

std::vector<std::string> tokenize(std::string_view source);

// Start offsets of token-boundary occurrences of `needle` in `haystack`, both
// already normalised.
std::vector<std::size_t> find_token_matches(std::string_view haystack, std::string_view needle);

bool is_stop_word(std::string_view token);

// Deterministic bag-of-tokens feature hashing into a fixed dimension,
// L2-normalised. Stop words are skipped.
class HashTextEncoder {
 public:
  explicit HashTextEncoder(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  // nullopt when no content tokens remain.
  std::optional<std::vector<double>> encode(std::string_view text) const;
  std::optional<std::vector<double>> encode_tokens(std::span<const std::string> tokens) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace xstack
