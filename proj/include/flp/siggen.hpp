#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "flp/common.hpp"
#include "flp/fft.hpp"

namespace flp {

enum class Modulation { QPSK, FlatComplexGaussian, Tone };
enum class PulseShape { Rect, RootRaisedCosine };

struct SubbandSpec {
  double carrier_hz = 0.0;
  double bandwidth_hz = 0.0;
  Modulation modulation = Modulation::FlatComplexGaussian;
  double power = 1.0;  // mean per-sample power contributed by this subband
  PulseShape pulse_shape = PulseShape::Rect;
  double rrc_rolloff = 0.25;
};

struct ComplexTimeSeries {
  std::vector<cplx> samples;
  double sample_rate_hz = 0.0;
};

// Half-open full-rate bin interval [lo, hi) occupied by one subband.
struct BinInterval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t width() const { return hi - lo; }
};

struct MultibandSpec {
  std::vector<SubbandSpec> subbands;
  double f_nyq_hz = 0.0;
  std::int64_t n_samples = 0;
  int max_subbands = 0;
  double b_max_hz = 0.0;

  double bin_width_hz() const { return f_nyq_hz / static_cast<double>(n_samples); }

  // Declared occupancy after quantizing band edges to integer DFT bins.
  // Tone subbands occupy the single bin nearest their carrier.
  BinInterval band_bins(const SubbandSpec& sb) const {
    const double bw = bin_width_hz();
    if (sb.modulation == Modulation::Tone) {
      const std::int64_t b = std::llround(sb.carrier_hz / bw);
      return {b, b + 1};
    }
    const std::int64_t lo = std::llround((sb.carrier_hz - sb.bandwidth_hz / 2.0) / bw);
    const std::int64_t hi = std::llround((sb.carrier_hz + sb.bandwidth_hz / 2.0) / bw);
    return {lo, hi};
  }

  std::vector<BinInterval> occupied_intervals() const {
    std::vector<BinInterval> iv;
    iv.reserve(subbands.size());
    for (const auto& sb : subbands) iv.push_back(band_bins(sb));
    std::sort(iv.begin(), iv.end(), [](const BinInterval& a, const BinInterval& b) {
      return a.lo < b.lo;
    });
    return iv;
  }

  std::vector<std::uint8_t> occupancy_mask() const {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_samples), 0);
    for (const auto& iv : occupied_intervals())
      for (std::int64_t f = iv.lo; f < iv.hi; ++f) mask[static_cast<std::size_t>(f)] = 1;
    return mask;
  }

  void validate() const {
    require(f_nyq_hz > 0.0, "MultibandSpec: f_nyq_hz must be positive");
    require(n_samples > 0, "MultibandSpec: n_samples must be positive");
    require(max_subbands >= 1, "MultibandSpec: max_subbands must be >= 1");
    require(b_max_hz > 0.0, "MultibandSpec: b_max_hz must be positive");
    require(static_cast<int>(subbands.size()) <= max_subbands,
            "MultibandSpec: more subbands than max_subbands");
    double landau = 0.0;
    for (const auto& sb : subbands) {
      require(sb.bandwidth_hz > 0.0, "SubbandSpec: bandwidth_hz must be positive");
      require(sb.bandwidth_hz <= b_max_hz, "SubbandSpec: bandwidth_hz exceeds b_max_hz");
      require(sb.power > 0.0, "SubbandSpec: power must be positive");
      require(sb.carrier_hz > 0.0 && sb.carrier_hz < f_nyq_hz,
              "SubbandSpec: carrier_hz must lie in (0, f_nyq)");
      landau += sb.bandwidth_hz;
      const auto b = band_bins(sb);
      require(b.lo >= 0 && b.hi <= n_samples,
              "SubbandSpec: band leaves [0, f_nyq) after bin quantization");
      require(b.hi > b.lo, "SubbandSpec: band quantizes to an empty bin range");
      if (sb.pulse_shape == PulseShape::RootRaisedCosine)
        require(sb.rrc_rolloff > 0.0 && sb.rrc_rolloff <= 1.0,
                "SubbandSpec: rrc_rolloff must lie in (0, 1]");
    }
    require(landau <= f_nyq_hz, "MultibandSpec: summed bandwidth exceeds f_nyq");
    auto iv = occupied_intervals();
    for (std::size_t k = 1; k < iv.size(); ++k)
      require(iv[k - 1].hi <= iv[k].lo, "MultibandSpec: subbands overlap after quantization");
  }
};

namespace detail {

inline std::uint64_t hash_double(double v) { return std::bit_cast<std::uint64_t>(v); }

// Seed derived from the subband's content, not its position, so adding
// unrelated subbands to a spec never changes this one's waveform.
inline std::uint64_t subband_seed(std::uint64_t seed, const MultibandSpec& spec,
                                  const SubbandSpec& sb) {
  const auto bins = spec.band_bins(sb);
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(bins.lo));
  h = splitmix64(h ^ static_cast<std::uint64_t>(bins.hi));
  h = splitmix64(h ^ static_cast<std::uint64_t>(sb.modulation));
  h = splitmix64(h ^ static_cast<std::uint64_t>(sb.pulse_shape));
  h = splitmix64(h ^ hash_double(sb.power));
  h = splitmix64(h ^ hash_double(sb.rrc_rolloff));
  return derive_seed(seed, h);
}

// Root-raised-cosine impulse response, unit symbol period.
inline double rrc_pulse(double t, double beta) {
  const double eps = 1e-9;
  if (std::abs(t) < eps) return 1.0 - beta + 4.0 * beta / kPi;
  if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < eps) {
    const double a = (1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta));
    const double b = (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta));
    return beta / std::sqrt(2.0) * (a + b);
  }
  const double num =
      std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
  const double den = kPi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
  return num / den;
}

// Pulse-shaped QPSK, confined to the declared bins: the shaped waveform is
// projected onto its band in the frequency domain (the sampled model keeps
// X(f) identically zero outside the declared support) and rescaled so the
// in-band energy matches the spec power exactly.
inline void add_qpsk_band(std::vector<cplx>& spectrum, const MultibandSpec& spec,
                          const SubbandSpec& sb, std::uint64_t seed) {
  const std::int64_t N = spec.n_samples;
  const auto bins = spec.band_bins(sb);
  const std::int64_t W = bins.width();  // symbol rate in bins == bandwidth
  const double fc_bins = 0.5 * static_cast<double>(bins.lo + bins.hi);
  Rng rng(seed);

  const std::int64_t n_sym = (N * W + N - 1) / N + 1;
  std::vector<cplx> symbols(static_cast<std::size_t>(n_sym));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (auto& s : symbols) {
    const std::uint64_t bits = rng.integer();
    s = {(bits & 1) ? inv_sqrt2 : -inv_sqrt2, (bits & 2) ? inv_sqrt2 : -inv_sqrt2};
  }

  std::vector<cplx> base(static_cast<std::size_t>(N));
  if (sb.pulse_shape == PulseShape::Rect) {
    for (std::int64_t m = 0; m < N; ++m)
      base[static_cast<std::size_t>(m)] = symbols[static_cast<std::size_t>(m * W / N)];
  } else {
    const double sps = static_cast<double>(N) / static_cast<double>(W);  // samples per symbol
    const int span = 8;
    for (std::int64_t m = 0; m < N; ++m) {
      const double sym_pos = static_cast<double>(m) / sps;
      const std::int64_t s0 = static_cast<std::int64_t>(std::floor(sym_pos));
      cplx acc = 0.0;
      for (std::int64_t s = s0 - span; s <= s0 + span; ++s) {
        if (s < 0 || s >= n_sym) continue;
        acc += symbols[static_cast<std::size_t>(s)] *
               rrc_pulse(sym_pos - static_cast<double>(s), sb.rrc_rolloff);
      }
      base[static_cast<std::size_t>(m)] = acc;
    }
    double e = 0.0;
    for (const auto& v : base) e += std::norm(v);
    if (e > 0.0) {
      const double g = std::sqrt(static_cast<double>(N) / e);
      for (auto& v : base) v *= g;
    }
  }

  for (std::int64_t m = 0; m < N; ++m) {
    // fc_bins may be half-integral; the angle is reduced over 2N ticks.
    const cplx ph = unit_phasor(static_cast<std::int64_t>(std::llround(2.0 * fc_bins)) * m, 2 * N);
    base[static_cast<std::size_t>(m)] *= ph;
  }

  const auto shaped = unitary_dft(base);
  double e = 0.0;
  for (std::int64_t f = bins.lo; f < bins.hi; ++f) e += std::norm(shaped[static_cast<std::size_t>(f)]);
  require(e > 0.0, "add_qpsk_band: no in-band energy after projection");
  const double g = std::sqrt(sb.power * static_cast<double>(N) / e);
  for (std::int64_t f = bins.lo; f < bins.hi; ++f)
    spectrum[static_cast<std::size_t>(f)] += g * shaped[static_cast<std::size_t>(f)];
}

}  // namespace detail

// Deterministic multiband synthesis at complex baseband on [0, f_nyq).
// Every subband is built in (or projected into) the frequency domain, so the
// output is exactly band-limited to the union of quantized bins, and each
// subband's mean per-sample power equals its spec power exactly.
inline ComplexTimeSeries synthesize_multiband(const MultibandSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::int64_t N = spec.n_samples;
  ComplexTimeSeries out;
  out.sample_rate_hz = spec.f_nyq_hz;
  out.samples.assign(static_cast<std::size_t>(N), cplx{0.0, 0.0});
  if (spec.subbands.empty()) return out;

  std::vector<cplx> spectrum(static_cast<std::size_t>(N), cplx{0.0, 0.0});
  for (const auto& sb : spec.subbands) {
    const std::uint64_t sub_seed = detail::subband_seed(seed, spec, sb);
    if (sb.modulation == Modulation::QPSK) {
      detail::add_qpsk_band(spectrum, spec, sb, sub_seed);
      continue;
    }
    const auto bins = spec.band_bins(sb);
    if (sb.modulation == Modulation::Tone) {
      // Unitary scaling: |X|^2 = power * N puts mean sample power at `power`.
      spectrum[static_cast<std::size_t>(bins.lo)] +=
          std::sqrt(sb.power * static_cast<double>(N));
      continue;
    }
    Rng rng(sub_seed);
    std::vector<cplx> coeff(static_cast<std::size_t>(bins.width()));
    double e = 0.0;
    for (auto& c : coeff) {
      c = rng.cnormal(1.0);
      e += std::norm(c);
    }
    const double g = std::sqrt(sb.power * static_cast<double>(N) / e);
    for (std::int64_t f = bins.lo; f < bins.hi; ++f)
      spectrum[static_cast<std::size_t>(f)] += g * coeff[static_cast<std::size_t>(f - bins.lo)];
  }

  out.samples = unitary_idft(spectrum);
  return out;
}

struct AwgnResult {
  ComplexTimeSeries series;
  double noise_variance = 0.0;  // E|n|^2 per complex sample
};

// Pure complex white Gaussian noise of the given per-sample variance.
inline ComplexTimeSeries awgn_series(std::int64_t n, double variance, double sample_rate_hz,
                                     std::uint64_t seed) {
  require(n > 0, "awgn_series: n must be positive");
  require(variance >= 0.0, "awgn_series: variance must be non-negative");
  ComplexTimeSeries out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (auto& v : out.samples) v = rng.cnormal(variance);
  return out;
}

// Adds complex AWGN sized so signal power / noise power equals snr_db.
// +infinity passes the signal through untouched with zero reported variance.
inline AwgnResult add_awgn(const ComplexTimeSeries& x, double snr_db, std::uint64_t seed) {
  require(!x.samples.empty(), "add_awgn: empty input series");
  require(!std::isnan(snr_db), "add_awgn: snr_db is NaN");
  AwgnResult res;
  res.series = x;
  if (std::isinf(snr_db) && snr_db > 0.0) {
    res.noise_variance = 0.0;
    return res;
  }
  require(!std::isinf(snr_db), "add_awgn: snr_db must be finite or +inf");

  double p = 0.0;
  for (const auto& v : x.samples) p += std::norm(v);
  p /= static_cast<double>(x.samples.size());
  require(p > 0.0, "add_awgn: zero-power signal with finite snr_db");

  res.noise_variance = p / std::pow(10.0, snr_db / 10.0);
  Rng rng(seed);
  for (auto& v : res.series.samples) v += rng.cnormal(res.noise_variance);
  return res;
}

}  // namespace flp
