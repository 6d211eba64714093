#pragma once

// Portable random streams. std::mt19937_64 output is fully specified by the
// standard; the distributions are not, so uniform/normal/integer draws are
// derived here from raw engine output.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace tevim {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent sub-stream `stream` of `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform on the open interval (0,1).
inline double uniform_open(Engine& g) noexcept {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection (no modulo bias).
inline std::uint64_t uniform_index(Engine& g, std::uint64_t bound) noexcept {
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t v = g();
  while (v >= limit) v = g();
  return v % bound;
}

/// Standard normal draws by Box-Muller, caching the second variate.
class NormalSampler {
 public:
  double operator()(Engine& g) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open(g)));
    const double theta = 2.0 * std::numbers::pi * uniform_open(g);
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class T>
void shuffle(std::span<T> values, Engine& g) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(g, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace tevim
