#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "flp/common.hpp"
#include "flp/fft.hpp"
#include "flp/siggen.hpp"

namespace flp {

// Multi-coset acquisition grid: r streams, stream s holding x[n*alpha + s*c].
struct CosetConfig {
  std::int64_t n_samples = 0;  // full-rate record length N
  int alpha = 0;               // undersampling factor
  int r = 0;                   // number of coset streams
  int shift_step = 1;          // coset offset step c

  std::int64_t buckets() const { return n_samples / alpha; }

  void validate() const {
    require(n_samples > 0, "CosetConfig: n_samples must be positive");
    require(alpha >= 1, "CosetConfig: alpha must be >= 1");
    require(n_samples % alpha == 0, "CosetConfig: alpha must divide n_samples");
    require(r >= 1 && r <= alpha, "CosetConfig: need 1 <= r <= alpha");
    require(shift_step >= 1, "CosetConfig: shift_step must be >= 1");
    // Keeps every stream index n*alpha + s*c inside the record. The root
    //-distinctness guarantees behind the locator polynomial were derived
    // under the strict form c*(r-1) < alpha-1; equality is still admissible
    // for sampling and is accepted here.
    require(static_cast<std::int64_t>(shift_step) * (r - 1) <= alpha - 1,
            "CosetConfig: require shift_step*(r-1) <= alpha-1");
  }
};

struct CosetSampleSet {
  std::vector<std::vector<cplx>> streams;  // r streams, each n_samples/alpha long
  CosetConfig config;
};

// Per-stream unitary DFTs, r x (N/alpha), row s = spectrum of stream s.
struct AliasedSpectrumMatrix {
  Eigen::MatrixXcd values;
  CosetConfig config;

  cplx operator()(int s, std::int64_t f) const { return values(s, f); }
};

inline CosetSampleSet coset_sample(const ComplexTimeSeries& x, const CosetConfig& cfg) {
  cfg.validate();
  require(static_cast<std::int64_t>(x.samples.size()) >= cfg.n_samples,
          "coset_sample: series shorter than configured n_samples");
  CosetSampleSet out;
  out.config = cfg;
  const std::int64_t m = cfg.buckets();
  out.streams.resize(static_cast<std::size_t>(cfg.r));
  for (int s = 0; s < cfg.r; ++s) {
    auto& stream = out.streams[static_cast<std::size_t>(s)];
    stream.resize(static_cast<std::size_t>(m));
    const std::int64_t off = static_cast<std::int64_t>(s) * cfg.shift_step;
    for (std::int64_t n = 0; n < m; ++n)
      stream[static_cast<std::size_t>(n)] = x.samples[static_cast<std::size_t>(n * cfg.alpha + off)];
  }
  return out;
}

inline AliasedSpectrumMatrix coset_dft(const CosetSampleSet& set) {
  set.config.validate();
  require(static_cast<int>(set.streams.size()) == set.config.r,
          "coset_dft: stream count does not match config");
  const std::int64_t m = set.config.buckets();
  AliasedSpectrumMatrix out;
  out.config = set.config;
  out.values.resize(set.config.r, m);
  for (int s = 0; s < set.config.r; ++s) {
    require(static_cast<std::int64_t>(set.streams[static_cast<std::size_t>(s)].size()) == m,
            "coset_dft: stream length mismatch");
    const auto spec = unitary_dft(set.streams[static_cast<std::size_t>(s)]);
    for (std::int64_t f = 0; f < m; ++f) out.values(s, f) = spec[static_cast<std::size_t>(f)];
  }
  return out;
}

// Literal aliasing identity, evaluated from the full-rate unitary DFT:
//   Y_s(f) = alpha^{-1/2} * sum_l X(f + l*N/alpha) * exp(j*2*pi*(f + l*N/alpha)*s*c/N).
// With unitary transforms on both sides the fold gain is alpha^{-1/2}.
// This is the independent reference route for coset_dft(coset_sample(x)).
inline AliasedSpectrumMatrix alias_oracle(const std::vector<cplx>& full_rate_dft,
                                          const CosetConfig& cfg) {
  cfg.validate();
  require(static_cast<std::int64_t>(full_rate_dft.size()) == cfg.n_samples,
          "alias_oracle: full-rate DFT length must equal n_samples");
  const std::int64_t m = cfg.buckets();
  AliasedSpectrumMatrix out;
  out.config = cfg;
  out.values.resize(cfg.r, m);
  const double gain = 1.0 / std::sqrt(static_cast<double>(cfg.alpha));
  for (int s = 0; s < cfg.r; ++s) {
    const std::int64_t tau = static_cast<std::int64_t>(s) * cfg.shift_step;
    for (std::int64_t f = 0; f < m; ++f) {
      cplx acc = 0.0;
      for (int l = 0; l < cfg.alpha; ++l) {
        const std::int64_t fl = f + static_cast<std::int64_t>(l) * m;
        acc += full_rate_dft[static_cast<std::size_t>(fl)] * unit_phasor(fl * tau, cfg.n_samples);
      }
      out.values(s, f) = gain * acc;
    }
  }
  return out;
}

// Full-rate bin index -> (bucket, slot): f = bucket + slot * (N/alpha).
inline std::pair<std::int64_t, int> bucket_and_slot(std::int64_t f, const CosetConfig& cfg) {
  require(f >= 0 && f < cfg.n_samples, "bucket_and_slot: bin out of range");
  const std::int64_t m = cfg.buckets();
  return {f % m, static_cast<int>(f / m)};
}

inline std::int64_t bin_of(std::int64_t bucket, int slot, const CosetConfig& cfg) {
  const std::int64_t m = cfg.buckets();
  require(bucket >= 0 && bucket < m, "bin_of: bucket out of range");
  require(slot >= 0 && slot < cfg.alpha, "bin_of: slot out of range");
  return bucket + static_cast<std::int64_t>(slot) * m;
}

}  // namespace flp
