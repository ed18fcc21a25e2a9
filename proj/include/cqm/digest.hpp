#pragma once

// 64-bit FNV-1a, used for config and archive digests (not cryptographic).

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace cqm {

class Fnv1a64 {
 public:
  void update(std::span<const std::byte> bytes) noexcept {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
  }

  void update(std::string_view s) noexcept { update(std::as_bytes(std::span(s.data(), s.size()))); }

  /// Hashes doubles by their little-endian IEEE-754 bytes.
  void update(std::span<const double> values) noexcept {
    for (double v : values) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      std::byte buf[8];
      for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xff);
      update(std::span<const std::byte>(buf, 8));
    }
  }

  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  Fnv1a64 h;
  h.update(s);
  return h.value();
}

}  // namespace cqm
