#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dsfm {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map them onto exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValueError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CompatibilityError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };

using Rng = std::mt19937_64;

/// 64-bit FNV-1a, used for every content fingerprint.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) {
    update(s.data(), s.size());
    update_value(static_cast<std::uint64_t>(s.size()));
  }
  template <class T>
  void update_value(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

/// Named sub-seed so each pipeline stage can be re-run in isolation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  Fnv1a h;
  h.update_value(seed);
  h.update(stage);
  return h.digest();
}

/// Uniform double in [lo, hi). Built from raw engine bits so the stream is
/// identical across standard library implementations.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(n)) % n;
}

/// Standard normal via Box-Muller, portable for the same reason as uniform().
inline double normal(Rng& rng) {
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dsfm
