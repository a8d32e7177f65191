#ifndef ECT_COMMON_HPP
#define ECT_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ect {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Real = double;
using MatX = Mat<Real>;

/// Bad configuration or invalid argument; CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / decode failures; CLI maps this to exit code 2.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64, used to derive independent sub-seeds from (seed, tag) so that
// training can be resumed without serializing generator state.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

/// Deterministic RNG with a platform-independent mapping to doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x1ull) {}

  std::uint64_t next_u64() {
    state_ = mix64(state_ + 0x2545f4914f6cdd1dull);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  /// Standard normal via Box-Muller (always consumes two draws).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used for config hashes in run reports.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace ect

#endif  // ECT_COMMON_HPP
