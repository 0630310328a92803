#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace xstack {

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const double> values);

// Stable 64-bit hash of a string under a seed (first 8 bytes of SHA-256).
// Used wherever a string must map to the same RNG stream on every platform.
std::uint64_t stable_hash64(std::string_view text, std::uint64_t seed = 0);

}  // namespace xstack
