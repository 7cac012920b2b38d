#ifndef ACV_HASH_HPP_
#define ACV_HASH_HPP_

#include <cstdint>
#include <cstring>
#include <string>

namespace acv {

// Incremental FNV-1a (64-bit): stable across platforms, used for config
// fingerprints and golden-output comparisons.
class Fnv1a64 {
 public:
  Fnv1a64& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a64& update(const std::string& s) { return update(s.data(), s.size()); }
  Fnv1a64& update_u32(std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                         std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    return update(b, 4);
  }
  Fnv1a64& update_u64(std::uint64_t v) {
    update_u32(std::uint32_t(v));
    return update_u32(std::uint32_t(v >> 32));
  }
  Fnv1a64& update_f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    return update_u32(bits);
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  return Fnv1a64().update(data, n).digest();
}

inline std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[std::size_t(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

// splitmix64 finalizer: cheap stateless coordinate hashing.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace acv

#endif  // ACV_HASH_HPP_
