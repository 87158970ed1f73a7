#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "flp/common.hpp"
#include "flp/mcsampler.hpp"
#include "flp/stats.hpp"

namespace flp {

// Pooled annihilation system over d consecutive buckets starting at
// bucket_start. Row block m in [0,d), row t in [0, r-n): the entry in
// column s-1 (s in [1,n]) is theta^{-(s+t)m} * Y_{s+t}(bucket_start+m) and
// the right-hand block holds theta^{-t m} * Y_t(bucket_start+m), with
// theta = exp(j*2*pi*c/N). Solving y1*a = -y2 recovers the locator
// coefficients of the window's first bucket; off-start buckets enter through
// the theta twist, which maps their coefficients onto the start bucket's.
struct WindowSystem {
  Eigen::MatrixXcd y1;
  Eigen::VectorXcd y2;
  std::int64_t bucket_start = 0;
  std::int64_t width = 0;  // d
  int n = 0;               // locator degree
  cplx theta;

  std::int64_t rows() const { return y1.rows(); }
};

enum class FlpMethod { LS, TLS, Exact };

// Locator coefficients a_1..a_n with the implicit a_0 = 1.
struct FlpCoefficients {
  Eigen::VectorXcd a;
  FlpMethod method = FlpMethod::Exact;
  bool degenerate = false;  // rank-deficient LS, or TLS fell back to LS

  int degree() const { return static_cast<int>(a.size()); }
};

struct CandidateEvaluation {
  std::int64_t bucket = 0;
  std::vector<cplx> values;       // G_hat at each of the alpha candidate roots
  std::vector<double> magnitudes; // |values|
  std::vector<int> selected_slots; // the n smallest magnitudes; ties -> lower slot
};

// Candidate roots for bucket i: slot l maps to exp(j*2*pi*(i + l*N/alpha)*c/N),
// l = 0..alpha-1.
inline std::vector<cplx> candidate_roots(std::int64_t bucket, const CosetConfig& cfg) {
  cfg.validate();
  const std::int64_t m = cfg.buckets();
  require(bucket >= 0 && bucket < m, "candidate_roots: bucket out of range");
  std::vector<cplx> roots(static_cast<std::size_t>(cfg.alpha));
  for (int l = 0; l < cfg.alpha; ++l) {
    const std::int64_t f = bucket + static_cast<std::int64_t>(l) * m;
    roots[static_cast<std::size_t>(l)] = unit_phasor(f * cfg.shift_step, cfg.n_samples);
  }
  return roots;
}

// Exact locator polynomial for a known occupied-slot set at one bucket:
// G(z) = prod_{l in slots} (1 - conj(z_l) * z), expanded to coefficient form.
// Every occupied slot's candidate root is an exact zero of G.
inline FlpCoefficients exact_flp(const std::vector<int>& slots, std::int64_t bucket,
                                 const CosetConfig& cfg) {
  require(!slots.empty(), "exact_flp: slot set must be non-empty");
  const auto roots = candidate_roots(bucket, cfg);
  for (int l : slots)
    require(l >= 0 && l < cfg.alpha, "exact_flp: slot index out of range");
  std::vector<cplx> coef{1.0};
  for (int l : slots) {
    const cplx w = std::conj(roots[static_cast<std::size_t>(l)]);
    std::vector<cplx> next(coef.size() + 1, cplx{0.0, 0.0});
    for (std::size_t k = 0; k < coef.size(); ++k) {
      next[k] += coef[k];
      next[k + 1] -= coef[k] * w;
    }
    coef = std::move(next);
  }
  FlpCoefficients out;
  out.method = FlpMethod::Exact;
  out.a.resize(static_cast<Eigen::Index>(coef.size()) - 1);
  for (std::size_t k = 1; k < coef.size(); ++k)
    out.a(static_cast<Eigen::Index>(k - 1)) = coef[k];
  return out;
}

inline WindowSystem build_window_system(const AliasedSpectrumMatrix& Y, std::int64_t bucket_start,
                                        std::int64_t d, int n) {
  const auto& cfg = Y.config;
  cfg.validate();
  const std::int64_t m = cfg.buckets();
  require(n >= 1, "build_window_system: locator degree must be >= 1");
  require(n < cfg.r, "build_window_system: need n < r");
  require(d >= 1, "build_window_system: window width must be >= 1");
  require(bucket_start >= 0 && bucket_start + d <= m,
          "build_window_system: window leaves the bucket range");
  require(cfg.r >= 2 * n || d >= n,
          "build_window_system: need r >= 2n or d >= n for a solvable system");

  WindowSystem sys;
  sys.bucket_start = bucket_start;
  sys.width = d;
  sys.n = n;
  sys.theta = unit_phasor(cfg.shift_step, cfg.n_samples);

  const int tmax = cfg.r - n;  // rows per bucket
  sys.y1.resize(d * tmax, n);
  sys.y2.resize(d * tmax);
  for (std::int64_t mm = 0; mm < d; ++mm) {
    for (int t = 0; t < tmax; ++t) {
      const std::int64_t row = mm * tmax + t;
      sys.y2(row) = unit_phasor(-static_cast<std::int64_t>(t) * mm * cfg.shift_step,
                                cfg.n_samples) *
                    Y.values(t, bucket_start + mm);
      for (int s = 1; s <= n; ++s)
        sys.y1(row, s - 1) =
            unit_phasor(-static_cast<std::int64_t>(s + t) * mm * cfg.shift_step, cfg.n_samples) *
            Y.values(s + t, bucket_start + mm);
    }
  }
  return sys;
}

// Minimum-norm least squares for y1*a = -y2. Singular values below
// 1e-10 * sigma_max are treated as zero; crossing that cutoff marks the
// solution degenerate (pseudo-inverse of a rank-deficient system).
inline FlpCoefficients solve_ls(const WindowSystem& sys) {
  require(sys.y1.rows() == sys.y2.rows(), "solve_ls: inconsistent system");
  require(sys.y1.rows() >= 1 && sys.y1.cols() >= 1, "solve_ls: empty system");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(sys.y1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  FlpCoefficients out;
  out.method = FlpMethod::LS;
  out.a = svd.solve((-sys.y2).eval());
  out.degenerate = svd.rank() < sys.y1.cols();
  return out;
}

// Total least squares: smallest right singular direction of [y1 | y2].
// The noiseless annihilation relation makes [a; 1] that direction, so the
// vector is rescaled to unit trailing entry. A vanishing trailing entry
// means the perturbation lives in y1 alone; fall back to LS and flag it.
// A tied smallest singular value means the nullspace has dimension > 1
// (fewer signal components than the polynomial order); the returned
// direction is then arbitrary within that space, so it is flagged too.
inline FlpCoefficients solve_tls(const WindowSystem& sys) {
  require(sys.y1.rows() == sys.y2.rows(), "solve_tls: inconsistent system");
  const Eigen::Index n = sys.y1.cols();
  Eigen::MatrixXcd aug(sys.y1.rows(), n + 1);
  aug.leftCols(n) = sys.y1;
  aug.col(n) = sys.y2;
  FlpCoefficients out;
  if (sys.y1.rows() <= n) {  // too few rows for a full null direction
    out = solve_ls(sys);
    out.method = FlpMethod::TLS;
    out.degenerate = true;
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(aug, Eigen::ComputeThinV);
  const Eigen::VectorXcd v = svd.matrixV().col(n);
  const auto& sv = svd.singularValues();
  const bool ambiguous = sv(0) <= 0.0 || sv(n - 1) < 1e-10 * sv(0);
  out.method = FlpMethod::TLS;
  if (std::abs(v(n)) < 1e-12) {
    out = solve_ls(sys);
    out.method = FlpMethod::TLS;
    out.degenerate = true;
    return out;
  }
  out.a = v.head(n) / v(n);
  out.degenerate = ambiguous;
  return out;
}

// G_hat(z) = 1 + sum_s a_s z^s at every candidate root of the bucket.
// Selection keeps the degree() smallest magnitudes, ties to the lower slot.
inline CandidateEvaluation evaluate_candidates(const FlpCoefficients& coeffs, std::int64_t bucket,
                                               const CosetConfig& cfg) {
  const auto roots = candidate_roots(bucket, cfg);
  CandidateEvaluation ev;
  ev.bucket = bucket;
  ev.values.resize(roots.size());
  ev.magnitudes.resize(roots.size());
  for (std::size_t l = 0; l < roots.size(); ++l) {
    const cplx z = roots[l];
    cplx acc = 0.0;
    for (Eigen::Index s = coeffs.a.size(); s >= 1; --s) acc = (acc + coeffs.a(s - 1)) * z;
    ev.values[l] = 1.0 + acc;
    ev.magnitudes[l] = std::abs(ev.values[l]);
  }
  const int keep = std::min<int>(coeffs.degree(), static_cast<int>(roots.size()));
  std::vector<int> order(roots.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev.magnitudes[static_cast<std::size_t>(a)] != ev.magnitudes[static_cast<std::size_t>(b)])
      return ev.magnitudes[static_cast<std::size_t>(a)] < ev.magnitudes[static_cast<std::size_t>(b)];
    return a < b;
  });
  ev.selected_slots.assign(order.begin(), order.begin() + keep);
  std::sort(ev.selected_slots.begin(), ev.selected_slots.end());
  return ev;
}

struct EvaluationStats {
  double mean = 0.0;
  double variance = 0.0;           // complex variance of G_hat(z)
  double real_part_variance = 0.0; // variance of Re{G_hat(z)}
};

// Under pure noise the candidate evaluation is complex Gaussian around 1
// with variance n/d; its real part carries half of that. d counts pooled
// equations (window width times r-n rows per bucket).
inline EvaluationStats pure_noise_stats(int n, std::int64_t d) {
  require(n >= 1 && d >= 1, "pure_noise_stats: need n >= 1, d >= 1");
  EvaluationStats st;
  st.mean = 1.0;
  st.variance = static_cast<double>(n) / static_cast<double>(d);
  st.real_part_variance = 0.5 * st.variance;
  return st;
}

// With a true root present the least-squares shrinkage pulls the evaluation
// to 1/(1+SNR), SNR being the per-window signal-to-noise power ratio of the
// pooled system. Complex variance 2*n*SNR / (d*(1+SNR)^2); real part half.
inline EvaluationStats low_snr_stats(int n, std::int64_t d, double snr) {
  require(n >= 1 && d >= 1, "low_snr_stats: need n >= 1, d >= 1");
  require(snr >= 0.0, "low_snr_stats: snr must be non-negative");
  EvaluationStats st;
  st.mean = 1.0 / (1.0 + snr);
  st.variance = 2.0 * static_cast<double>(n) * snr /
                (static_cast<double>(d) * (1.0 + snr) * (1.0 + snr));
  st.real_part_variance = 0.5 * st.variance;
  return st;
}

enum class ThresholdMode {
  // Literal legacy form sqrt(n/d) * (1 + Qinv(1 - pf)). Ignores the unit
  // null mean, so it sits near zero and goes negative for small pf; kept
  // for comparison only.
  Uncentered,
  // Placed against the null law Re{G_hat} ~ N(1, n/(2d)):
  // xi = 1 - sqrt(n/(2d)) * Qinv(pf), giving P(Re < xi | noise) = pf.
  NullCalibrated,
};

inline double detection_threshold(int n, std::int64_t d, double p_f, ThresholdMode mode) {
  require(n >= 1 && d >= 1, "detection_threshold: need n >= 1, d >= 1");
  require(p_f > 0.0 && p_f < 1.0, "detection_threshold: p_f in (0,1)");
  const double nd = static_cast<double>(n) / static_cast<double>(d);
  if (mode == ThresholdMode::Uncentered)
    return std::sqrt(nd) * (1.0 + q_inverse(1.0 - p_f));
  return 1.0 - std::sqrt(0.5 * nd) * q_inverse(p_f);
}

// P(Re{G_hat(z)} < xi) for a true root at the given per-window SNR.
inline double predicted_pd(double xi, int n, std::int64_t d, double snr) {
  const auto st = low_snr_stats(n, d, snr);
  const double sd = std::sqrt(st.real_part_variance);
  if (sd == 0.0) return xi > st.mean ? 1.0 : 0.0;
  return normal_cdf((xi - st.mean) / sd);
}

}  // namespace flp
