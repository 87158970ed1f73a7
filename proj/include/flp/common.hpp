#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace flp {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Error for any violated precondition or malformed configuration.
class invalid_config : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw invalid_config(what);
}

// SplitMix64: stable stream derivation for sub-seeds (per subband, per trial).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

// Deterministic RNG wrapper. Same seed -> same sample sequence on a fixed build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }

  // Complex Gaussian with E|z|^2 = variance.
  cplx cnormal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    return {s * normal(), s * normal()};
  }

  std::uint64_t integer() { return gen_(); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// exp(j * 2*pi * k / n) with the angle reduced exactly in integer arithmetic.
inline cplx unit_phasor(std::int64_t k, std::int64_t n) {
  std::int64_t m = k % n;
  if (m < 0) m += n;
  return std::polar(1.0, 2.0 * kPi * static_cast<double>(m) / static_cast<double>(n));
}

}  // namespace flp
