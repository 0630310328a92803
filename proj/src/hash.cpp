#include "xstack/hash.hpp"

#include <openssl/sha.h>

#include <array>
#include <cstring>

namespace xstack {
namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(const void* data, std::size_t len) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
  SHA256(static_cast<const unsigned char*>(data), len, out.data());
  return out;
}

std::string to_hex(const std::array<unsigned char, SHA256_DIGEST_LENGTH>& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(d.size() * 2);
  for (unsigned char c : d) {
    s.push_back(kHex[c >> 4]);
    s.push_back(kHex[c & 0xF]);
  }
  return s;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) { return to_hex(digest(bytes.data(), bytes.size())); }

std::string sha256_hex(std::span<const double> values) {
  return to_hex(digest(values.data(), values.size_bytes()));
}

std::uint64_t stable_hash64(std::string_view text, std::uint64_t seed) {
  std::string buf(8, '\0');
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((seed >> (8 * i)) & 0xFF);
  buf.append(text);
  const auto d = digest(buf.data(), buf.size());
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h |= static_cast<std::uint64_t>(d[i]) << (8 * i);
  return h;
}

}  // namespace xstack
