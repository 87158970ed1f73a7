#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "flp/flpcore.hpp"
#include "flp/mcsampler.hpp"

namespace flp {

enum class SolverKind { LS, TLS };

struct DetectorConfig {
  double p_f = 0.01;
  std::int64_t d = 0;    // window width in buckets
  int n_s = 0;           // locator degree == assumed max collisions per bucket
  ThresholdMode threshold_mode = ThresholdMode::NullCalibrated;
  std::int64_t stride = 0;  // 0 -> d (non-overlapping tiling)
  SolverKind solver = SolverKind::LS;
  bool worst_case_filter = false;
  bool refine_boundaries = true;
  bool trim_trailing = false;
  double kappa = 2.0;

  std::int64_t effective_stride() const { return stride == 0 ? d : stride; }

  void validate(const CosetConfig& coset) const {
    coset.validate();
    require(p_f > 0.0 && p_f < 1.0, "DetectorConfig: p_f in (0,1)");
    require(n_s >= 1, "DetectorConfig: n_s >= 1");
    require(n_s < coset.r, "DetectorConfig: need n_s < r");
    require(d >= 1 && d <= coset.buckets(), "DetectorConfig: d must lie in [1, buckets]");
    const std::int64_t s = effective_stride();
    require(s >= 1 && s <= d, "DetectorConfig: stride must lie in [1, d]");
    require(coset.r >= 2 * n_s || d >= n_s,
            "DetectorConfig: need r >= 2*n_s or d >= n_s");
    require(kappa > 0.0, "DetectorConfig: kappa must be positive");
  }
};

// Decision for one bucket: slots accepted by any window covering it.
struct BucketDecision {
  std::int64_t bucket = 0;
  std::vector<int> occupied_slots;
  CandidateEvaluation evaluation;  // from the nearest covering window start
  double threshold_used = 0.0;
};

// One solved window: locator estimate, evaluation at the start bucket's
// candidates, and the slots whose Re{G_hat} cleared the threshold among the
// magnitude-ranked selection.
struct WindowRecord {
  std::int64_t start = 0;
  std::int64_t width = 0;
  FlpCoefficients coeffs;
  CandidateEvaluation evaluation;
  double threshold = 0.0;
  std::vector<int> accepted_slots;
  bool shrunk = false;
};

struct ScanResult {
  std::vector<BucketDecision> buckets;
  std::vector<WindowRecord> windows;
  std::int64_t stride = 0;
  std::int64_t d = 0;
};

struct Band {
  double carrier_hz = 0.0;
  double bandwidth_hz = 0.0;
};

// Detected support as disjoint, sorted, half-open full-rate bin intervals.
struct SupportEstimate {
  std::vector<std::pair<std::int64_t, std::int64_t>> intervals;
  std::vector<Band> bands;
  int n_detected = 0;
};

namespace detail {

// A window whose energy is below this fraction of the whole capture's RMS is
// numerically empty: any structure the solver finds in it is floating-point
// rounding residue from the transforms, not data. Relative to the capture so
// decisions stay invariant under scaling the input.
inline constexpr double k_empty_window_rel = 1e-10;

inline WindowRecord run_window(const AliasedSpectrumMatrix& Y, std::int64_t start,
                               std::int64_t width, const DetectorConfig& cfg,
                               double capture_rms) {
  WindowRecord rec;
  rec.start = start;
  rec.width = width;
  rec.shrunk = width < cfg.d;
  const auto r = Y.values.rows();
  const double window_rms = Y.values.middleCols(start, width).norm() /
                            std::sqrt(static_cast<double>(r * width));
  if (window_rms <= k_empty_window_rel * capture_rms) {
    rec.coeffs.a = Eigen::VectorXcd::Zero(cfg.n_s);
    rec.coeffs.method = cfg.solver == SolverKind::TLS ? FlpMethod::TLS : FlpMethod::LS;
    rec.coeffs.degenerate = true;
    rec.evaluation = evaluate_candidates(rec.coeffs, start, Y.config);
    rec.evaluation.selected_slots.clear();
    rec.threshold = detection_threshold(cfg.n_s, width * (r - cfg.n_s), cfg.p_f,
                                        cfg.threshold_mode);
    return rec;
  }
  // A rank-deficient system means fewer signal components than the polynomial
  // order; the surplus roots of a pseudo-inverse solution land at arbitrary
  // candidates. Reduce the order until the solve is determined, so the
  // polynomial carries exactly the components the data supports.
  int order = cfg.n_s;
  for (;;) {
    const auto sys = build_window_system(Y, start, width, order);
    rec.coeffs = cfg.solver == SolverKind::TLS ? solve_tls(sys) : solve_ls(sys);
    rec.threshold = detection_threshold(order, sys.rows(), cfg.p_f, cfg.threshold_mode);
    if (!rec.coeffs.degenerate || order == 1) break;
    --order;
  }
  rec.evaluation = evaluate_candidates(rec.coeffs, start, Y.config);
  for (int slot : rec.evaluation.selected_slots)
    if (rec.evaluation.values[static_cast<std::size_t>(slot)].real() < rec.threshold)
      rec.accepted_slots.push_back(slot);
  return rec;
}

}  // namespace detail

// Single-window decision, reported at the window's start bucket. The same
// decision applies to every bucket the window covers; scan_spectrum performs
// that assignment and the cross-window union.
inline BucketDecision detect_window(const AliasedSpectrumMatrix& Y, std::int64_t bucket_start,
                                    const DetectorConfig& cfg) {
  cfg.validate(Y.config);
  const std::int64_t m = Y.config.buckets();
  require(bucket_start >= 0 && bucket_start < m, "detect_window: bucket out of range");
  const std::int64_t width = std::min<std::int64_t>(cfg.d, m - bucket_start);
  const double capture_rms =
      Y.values.norm() / std::sqrt(static_cast<double>(Y.values.size()));
  const auto rec = detail::run_window(Y, bucket_start, width, cfg, capture_rms);
  BucketDecision dec;
  dec.bucket = bucket_start;
  dec.occupied_slots = rec.accepted_slots;
  dec.evaluation = rec.evaluation;
  dec.threshold_used = rec.threshold;
  return dec;
}

inline ScanResult worst_case_filter(const ScanResult& scan, const AliasedSpectrumMatrix& Y,
                                    const DetectorConfig& cfg);

// Tiles windows over the bucket axis at the configured stride, merging
// per-bucket decisions by union across covering windows. Edge windows that
// no longer fit are shrunk and flagged; ones too short to solve are skipped.
// When cfg.worst_case_filter is set, the consistency filter below runs on
// the result before it is returned.
inline ScanResult scan_spectrum(const AliasedSpectrumMatrix& Y, const DetectorConfig& cfg) {
  cfg.validate(Y.config);
  const auto& coset = Y.config;
  const std::int64_t m = coset.buckets();
  const std::int64_t stride = cfg.effective_stride();

  ScanResult out;
  out.stride = stride;
  out.d = cfg.d;
  const double capture_rms =
      Y.values.norm() / std::sqrt(static_cast<double>(Y.values.size()));
  for (std::int64_t p = 0; p < m; p += stride) {
    const std::int64_t width = std::min<std::int64_t>(cfg.d, m - p);
    if (width < cfg.d && !(coset.r >= 2 * cfg.n_s || width >= cfg.n_s)) continue;
    out.windows.push_back(detail::run_window(Y, p, width, cfg, capture_rms));
  }

  out.buckets.resize(static_cast<std::size_t>(m));
  std::vector<std::set<int>> unions(static_cast<std::size_t>(m));
  std::vector<const WindowRecord*> source(static_cast<std::size_t>(m), nullptr);
  for (const auto& w : out.windows) {
    for (std::int64_t b = w.start; b < w.start + w.width; ++b) {
      unions[static_cast<std::size_t>(b)].insert(w.accepted_slots.begin(),
                                                 w.accepted_slots.end());
      source[static_cast<std::size_t>(b)] = &w;  // nearest start at or before b
    }
  }
  for (std::int64_t b = 0; b < m; ++b) {
    auto& dec = out.buckets[static_cast<std::size_t>(b)];
    dec.bucket = b;
    dec.occupied_slots.assign(unions[static_cast<std::size_t>(b)].begin(),
                              unions[static_cast<std::size_t>(b)].end());
    if (source[static_cast<std::size_t>(b)]) {
      dec.evaluation = source[static_cast<std::size_t>(b)]->evaluation;
      dec.threshold_used = source[static_cast<std::size_t>(b)]->threshold;
    }
  }
  if (cfg.worst_case_filter) return worst_case_filter(out, Y, cfg);
  return out;
}

namespace detail {

// Off-root magnitude floors for tightly packed occupancy: probe adjacent to a
// single root, probe between two roots one slot apart, and probe flanked at
// distances (1,1,2). At alpha = 10 these are 0.6180, 0.3820, 0.4490.
inline std::vector<double> worst_case_constants(int alpha) {
  const double s1 = 2.0 * std::sin(kPi / alpha);
  const double s2 = 2.0 * std::sin(2.0 * kPi / alpha);
  return {s1, s1 * s1, s1 * s1 * s2};
}

}  // namespace detail

// Consistency filter for worst-case off-root geometry ("reverse proving").
// A lone occupant solved at surplus order drags the evaluations of its
// adjacent candidates below the acceptance threshold, so isolated bands ship
// with two systematic false acceptances. The filter tests each accepted slot
// against the hypothesis that it is a true root alongside its peers:
//   * its real part must exceed the window's most root-like evaluation by
//     more than kappa * sqrt(2) * sd (otherwise it is statistically
//     comparable and kept), and
//   * the exact locator built from the clearly-more-root-like slots must
//     evaluate at the suspect within 10% of a known worst-case constant
//     (otherwise its geometry is not a known failure mode), and
//   * its deficit ratio (1 - Re)/(1 - mu) must lie closer to the surplus-
//     order prediction for a false root at that geometry than to the
//     prediction for a true root, both derived from the first-order response
//     K(q) = sum_{k<=n} q^k of the minimum-norm solve.
// Suspects are peeled from the weakest evaluation downward so one false
// acceptance cannot shield another. Off by default; rebuilds bucket unions.
inline ScanResult worst_case_filter(const ScanResult& scan, const AliasedSpectrumMatrix& Y,
                                    const DetectorConfig& cfg) {
  cfg.validate(Y.config);
  ScanResult out = scan;
  const auto constants = detail::worst_case_constants(Y.config.alpha);
  const double sqrt2 = std::sqrt(2.0);

  for (auto& w : out.windows) {
    if (w.accepted_slots.size() < 2) continue;
    const int n = w.coeffs.degree();
    if (n < 2) continue;
    const std::int64_t rows = w.width * (Y.config.r - n);
    const double sd = std::sqrt(pure_noise_stats(n, rows).real_part_variance);
    const double gate = cfg.kappa * sqrt2 * sd;
    const auto re_of = [&](int slot) {
      return w.evaluation.values[static_cast<std::size_t>(slot)].real();
    };
    // Real part of K over a slot offset on the alias ring.
    const auto re_k = [&](int dl) {
      double re = 0.0;
      for (int k = 1; k <= n; ++k)
        re += std::cos(2.0 * kPi * static_cast<double>(dl) *
                       static_cast<double>(Y.config.shift_step) * static_cast<double>(k) /
                       static_cast<double>(Y.config.alpha));
      return re;
    };

    std::vector<int> acc = w.accepted_slots;
    bool changed = true;
    while (changed && acc.size() >= 2) {
      changed = false;
      std::sort(acc.begin(), acc.end(), [&](int a, int b) { return re_of(a) < re_of(b); });
      const int mu_slot = acc.front();
      const double mu = re_of(mu_slot);
      if (1.0 - mu < gate) break;  // no credible root anchor in this window
      for (std::size_t idx = acc.size(); idx-- > 1 && !changed;) {
        const int s = acc[idx];
        if (re_of(s) - mu <= gate) continue;
        std::vector<int> anchors;
        for (int t : acc)
          if (re_of(t) <= re_of(s) - gate) anchors.push_back(t);
        if (anchors.empty()) continue;

        const auto locator = exact_flp(anchors, w.start, Y.config);
        const double implied =
            evaluate_candidates(locator, w.start, Y.config).magnitudes[static_cast<std::size_t>(s)];
        bool near_constant = false;
        for (double c : constants)
          if (std::abs(implied - c) <= 0.10 * c) near_constant = true;
        if (!near_constant) continue;

        // The anchor's own deficit under each hypothesis sets the scale:
        // under "s is false" the signal set is the anchors alone, under
        // "s is true" it is every accepted slot.
        double denom_false = static_cast<double>(n);
        for (int a : anchors)
          if (a != mu_slot) denom_false += re_k(a - mu_slot);
        double denom_true = static_cast<double>(n);
        for (int t : acc)
          if (t != mu_slot) denom_true += re_k(t - mu_slot);
        double num_true = static_cast<double>(n);
        for (int t : acc)
          if (t != s) num_true += re_k(s - t);
        double num_false = 0.0;
        for (int a : anchors) num_false += re_k(s - a);
        if (!(denom_false > 0.0) || !(denom_true > 0.0)) continue;
        const double rho = (1.0 - re_of(s)) / (1.0 - mu);
        const double rho_true = num_true / denom_true;
        const double rho_false = num_false / denom_false;
        if (std::abs(rho - rho_false) < std::abs(rho - rho_true)) {
          acc.erase(acc.begin() + static_cast<std::ptrdiff_t>(idx));
          changed = true;
        }
      }
    }
    std::sort(acc.begin(), acc.end());
    w.accepted_slots = acc;
  }

  const std::int64_t m = Y.config.buckets();
  std::vector<std::set<int>> unions(static_cast<std::size_t>(m));
  for (const auto& w : out.windows)
    for (std::int64_t b = w.start; b < w.start + w.width; ++b)
      unions[static_cast<std::size_t>(b)].insert(w.accepted_slots.begin(),
                                                 w.accepted_slots.end());
  for (std::int64_t b = 0; b < m; ++b)
    out.buckets[static_cast<std::size_t>(b)].occupied_slots.assign(
        unions[static_cast<std::size_t>(b)].begin(), unions[static_cast<std::size_t>(b)].end());
  return out;
}

namespace detail {

// Residual energy of bucket b after annihilating `slots` with their exact
// locator polynomial: what remains is any other occupant's energy plus noise.
// Normalized by the coefficient energy so the noise floor is flat across b.
inline double annihilation_residual(const AliasedSpectrumMatrix& Y, std::int64_t b,
                                    std::vector<int> slots) {
  if (static_cast<int>(slots.size()) > Y.config.r - 1)
    slots.resize(static_cast<std::size_t>(Y.config.r - 1));
  if (slots.empty()) {  // nothing to annihilate: plain mean stream energy
    double e = 0.0;
    for (int t = 0; t < Y.config.r; ++t) e += std::norm(Y.values(t, b));
    return e / Y.config.r;
  }
  const auto coeffs = exact_flp(slots, b, Y.config);
  const int np = coeffs.degree();
  const int rows = Y.config.r - np;
  double norm2 = 1.0;
  for (int s = 0; s < np; ++s) norm2 += std::norm(coeffs.a(s));
  double e = 0.0;
  for (int t = 0; t < rows; ++t) {
    cplx acc = Y.values(t, b);
    for (int s = 1; s <= np; ++s) acc += coeffs.a(s - 1) * Y.values(s + t, b);
    e += std::norm(acc);
  }
  return e / (norm2 * rows);
}

// Energy of bucket b in slot `target` after annihilating `others`: the
// annihilated rows are combined coherently at the target's candidate root,
// which squares the signal gain across rows while the (correlated) noise
// adds at its exact filter gain -- divided out so the noise floor stays flat
// across buckets even when `others` varies. Sharper than the incoherent
// row-energy sum for edge localization, and immune to steps caused by other
// occupants' band edges (their components are exactly annihilated).
inline double slot_matched_residual(const AliasedSpectrumMatrix& Y, std::int64_t b,
                                    int target, std::vector<int> others) {
  const int r = Y.config.r;
  if (static_cast<int>(others.size()) > r - 1) others.resize(static_cast<std::size_t>(r - 1));
  std::vector<cplx> c{1.0};
  if (!others.empty()) {
    const auto coeffs = exact_flp(others, b, Y.config);
    for (int k = 0; k < coeffs.degree(); ++k) c.push_back(coeffs.a(k));
  }
  const int q = static_cast<int>(c.size()) - 1;
  const int rows = r - q;
  const cplx zbar = std::conj(candidate_roots(b, Y.config)[static_cast<std::size_t>(target)]);
  std::vector<cplx> zpow(static_cast<std::size_t>(rows));
  zpow[0] = 1.0;
  for (int t = 1; t < rows; ++t) zpow[static_cast<std::size_t>(t)] = zpow[static_cast<std::size_t>(t - 1)] * zbar;
  cplx u = 0.0;
  for (int t = 0; t < rows; ++t) {
    cplx acc = 0.0;
    for (int k = 0; k <= q; ++k) acc += c[static_cast<std::size_t>(k)] * Y.values(t + k, b);
    u += zpow[static_cast<std::size_t>(t)] * acc;
  }
  // Exact white-noise gain of the combined annihilate+steer filter.
  double gain = 0.0;
  for (int s = 0; s < q + rows; ++s) {
    cplx w = 0.0;
    for (int k = std::max(0, s - rows + 1); k <= std::min(q, s); ++k)
      w += c[static_cast<std::size_t>(k)] * zpow[static_cast<std::size_t>(s - k)];
    gain += std::norm(w);
  }
  return std::norm(u) / gain;
}

struct SlotRun {
  int slot = 0;
  std::int64_t q_first = 0;   // first accepting window start
  std::int64_t q_last = 0;    // last accepting window start
  std::int64_t hull_end = 0;  // end of last accepting window
};

// Generalized-likelihood-ratio gate for a single split point: twice the
// exponential-model log-likelihood gain of the best split over the flat fit
// must exceed this before an edge is believed. Under a flat profile each
// fixed split's gain is ~chi-square(1), so 30 holds the per-search false
// edge rate near 1e-4 even over ~1e4 candidate splits, while genuine band
// edges at the weakest workable per-bucket contrast score in the hundreds.
inline constexpr double k_edge_significance = 30.0;

// Change point of a step in the energy profile `e` over [lo, lo + size):
// the split maximizing the profile log-likelihood of a one-jump mean change
// under an exponential (energy) model, restricted to splits oriented the
// requested way with the low side clearly below the high side and with a
// likelihood gain over the flat fit of at least `min_lambda`. Means are
// floored so exactly-zero (noiseless) segments stay finite -- the floor
// makes the likelihood strongly prefer the split that keeps every zero
// sample on the low side, which is what makes noiseless edges bin-exact.
// Returns nothing when no oriented split qualifies (e.g. a flat profile or
// a band flush against the end of the range).
inline std::optional<std::int64_t> step_change_point(const std::vector<double>& e,
                                                     std::int64_t lo, bool up,
                                                     double min_lambda = 0.0) {
  const std::int64_t n = static_cast<std::int64_t>(e.size());
  if (n < 3) return std::nullopt;
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    prefix[static_cast<std::size_t>(i + 1)] =
        prefix[static_cast<std::size_t>(i)] + e[static_cast<std::size_t>(i)];
  const double total = prefix[static_cast<std::size_t>(n)];
  if (!(total > 0.0)) return std::nullopt;
  const double floor_mean = (total / static_cast<double>(n)) * 1e-12;

  double best = -std::numeric_limits<double>::infinity();
  std::int64_t arg = -1;
  for (std::int64_t tau = 1; tau < n; ++tau) {
    const double m_left = prefix[static_cast<std::size_t>(tau)] / static_cast<double>(tau);
    const double m_right =
        (total - prefix[static_cast<std::size_t>(tau)]) / static_cast<double>(n - tau);
    const double m_low = up ? m_left : m_right;
    const double m_high = up ? m_right : m_left;
    if (!(m_low < 0.8 * m_high)) continue;
    const double ll = -static_cast<double>(tau) * std::log(std::max(m_left, floor_mean)) -
                      static_cast<double>(n - tau) * std::log(std::max(m_right, floor_mean));
    if (ll > best) {
      best = ll;
      arg = tau;
    }
  }
  if (arg < 0) return std::nullopt;
  const double ll_flat = -static_cast<double>(n) * std::log(total / static_cast<double>(n));
  if (2.0 * (best - ll_flat) < min_lambda) return std::nullopt;
  return lo + arg;
}

// step_change_point with one re-localization pass: when the range holds a
// second significant structure past the nearest gap (e.g. a neighboring
// band), the first split's low side is a gap/band mixture and drags the edge
// a few buckets into the band. Locating the opposite edge and re-splitting
// against it makes the low side a pure (floored) segment, which pins the
// edge. Both the opposite edge and the re-split must clear the same
// significance gate, so a pure-noise flank never triggers the pass.
inline std::optional<std::int64_t> refined_edge(const std::vector<double>& e, std::int64_t lo,
                                                bool up,
                                                double min_lambda = k_edge_significance) {
  const auto first = step_change_point(e, lo, up, min_lambda);
  if (!first) return first;
  if (up) {
    const std::vector<double> head(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(*first - lo));
    if (auto pre = step_change_point(head, lo, false, min_lambda)) {
      const std::vector<double> tail(e.begin() + static_cast<std::ptrdiff_t>(*pre - lo), e.end());
      if (auto again = step_change_point(tail, *pre, true, min_lambda)) return again;
    }
    return first;
  }
  const std::vector<double> tail(e.begin() + static_cast<std::ptrdiff_t>(*first - lo), e.end());
  if (auto post = step_change_point(tail, *first, true, min_lambda)) {
    const std::vector<double> head(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(*post - lo));
    if (auto again = step_change_point(head, lo, false, min_lambda)) return again;
  }
  return first;
}

// Most prominent interior valley of the profile over [lo, lo + size): the
// split pair (t1, t2) maximizing the three-segment exponential-model
// log-likelihood with the middle mean below 0.8x both flank means. A
// single-step search cannot be trusted to find such a valley: its side
// means run over whole flanks, so a short dip between two bands -- or a dip
// next to a much denser band -- never looks like an oriented step even
// though the valley itself is deep. Means are floored as in
// step_change_point so exactly-zero dips pin bin-exactly. The gain over the
// flat fit must clear `min_lambda`; the default is double the single-edge
// gate since the pair search selects over ~size^2 candidates with two free
// parameters. Degradation under noise is always a missed split, never an
// invented one, because callers re-test the returned dip for contrast and
// significance.
inline std::optional<std::pair<std::int64_t, std::int64_t>> valley_change_points(
    const std::vector<double>& e, std::int64_t lo,
    double min_lambda = 2.0 * k_edge_significance) {
  const std::int64_t n = static_cast<std::int64_t>(e.size());
  if (n < 4) return std::nullopt;
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    prefix[static_cast<std::size_t>(i + 1)] =
        prefix[static_cast<std::size_t>(i)] + e[static_cast<std::size_t>(i)];
  const double total = prefix[static_cast<std::size_t>(n)];
  if (!(total > 0.0)) return std::nullopt;
  const double floor_mean = (total / static_cast<double>(n)) * 1e-12;

  double best = -std::numeric_limits<double>::infinity();
  std::int64_t arg1 = -1, arg2 = -1;
  for (std::int64_t t1 = 1; t1 + 1 < n; ++t1) {
    const double sum_a = prefix[static_cast<std::size_t>(t1)];
    const double m_a = sum_a / static_cast<double>(t1);
    const double ll_a = -static_cast<double>(t1) * std::log(std::max(m_a, floor_mean));
    for (std::int64_t t2 = t1 + 1; t2 < n; ++t2) {
      const double m_mid =
          (prefix[static_cast<std::size_t>(t2)] - sum_a) / static_cast<double>(t2 - t1);
      if (!(m_mid < 0.8 * m_a)) continue;
      const double m_c =
          (total - prefix[static_cast<std::size_t>(t2)]) / static_cast<double>(n - t2);
      if (!(m_mid < 0.8 * m_c)) continue;
      const double ll = ll_a -
                        static_cast<double>(t2 - t1) * std::log(std::max(m_mid, floor_mean)) -
                        static_cast<double>(n - t2) * std::log(std::max(m_c, floor_mean));
      if (ll > best) {
        best = ll;
        arg1 = t1;
        arg2 = t2;
      }
    }
  }
  if (arg1 < 0) return std::nullopt;
  const double ll_flat = -static_cast<double>(n) * std::log(total / static_cast<double>(n));
  if (2.0 * (best - ll_flat) < min_lambda) return std::nullopt;
  return std::make_pair(lo + arg1, lo + arg2);
}

}  // namespace detail

// Half-open bin intervals -> merged support plus band parameters. Touching
// or overlapping intervals merge; empty ones are dropped. Idempotent.
inline SupportEstimate normalize_support(std::vector<std::pair<std::int64_t, std::int64_t>> iv,
                                         double bin_width_hz) {
  std::sort(iv.begin(), iv.end());
  SupportEstimate est;
  for (const auto& [lo, hi] : iv) {
    if (hi <= lo) continue;
    if (!est.intervals.empty() && lo <= est.intervals.back().second)
      est.intervals.back().second = std::max(est.intervals.back().second, hi);
    else
      est.intervals.emplace_back(lo, hi);
  }
  est.n_detected = static_cast<int>(est.intervals.size());
  est.bands.reserve(est.intervals.size());
  for (const auto& [lo, hi] : est.intervals)
    est.bands.push_back(Band{0.5 * static_cast<double>(lo + hi) * bin_width_hz,
                             static_cast<double>(hi - lo) * bin_width_hz});
  return est;
}

inline std::vector<Band> estimate_bands(const SupportEstimate& support, double bin_width_hz) {
  std::vector<Band> bands;
  bands.reserve(support.intervals.size());
  for (const auto& [lo, hi] : support.intervals)
    bands.push_back(Band{0.5 * static_cast<double>(lo + hi) * bin_width_hz,
                         static_cast<double>(hi - lo) * bin_width_hz});
  return bands;
}

// Converts per-window acceptances into frequency support. Stage one extracts
// per-slot runs over window starts and applies the overreach trim: the run's
// leading edge moves in by (d - stride) -- at stride 1 that is the classic
// "first d-1 decisions come from windows whose tail touched the band" trim,
// at stride d (tiling) there is nothing to trim. Stage two (default on)
// refines each edge by a change-point search on the per-bucket matched
// residual (co-accepted slots annihilated, rows steered at the run's own
// root), which restores bin accuracy regardless of stride and drops runs
// whose profile carries no boundary at all. Runs in the same slot merge
// when they touch; empty intervals are discarded.
inline SupportEstimate resolve_boundaries(const ScanResult& scan, const AliasedSpectrumMatrix& Y,
                                          const DetectorConfig& cfg, double bin_width_hz) {
  cfg.validate(Y.config);
  const std::int64_t m = Y.config.buckets();
  require(static_cast<std::int64_t>(scan.buckets.size()) == m,
          "resolve_boundaries: decisions must cover all buckets");
  const std::int64_t stride = scan.stride > 0 ? scan.stride : cfg.effective_stride();
  const std::int64_t d = scan.d > 0 ? scan.d : cfg.d;

  std::vector<detail::SlotRun> runs;
  for (int slot = 0; slot < Y.config.alpha; ++slot) {
    bool open = false;
    for (const auto& w : scan.windows) {
      const bool has =
          std::find(w.accepted_slots.begin(), w.accepted_slots.end(), slot) !=
          w.accepted_slots.end();
      if (!has) {
        open = false;
        continue;
      }
      if (open && w.start - runs.back().q_last <= stride) {
        runs.back().q_last = w.start;
        runs.back().hull_end = std::max(runs.back().hull_end, w.start + w.width);
      } else {
        runs.push_back(detail::SlotRun{slot, w.start, w.start, w.start + w.width});
      }
      open = true;
    }
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> intervals;
  for (const auto& run : runs) {
    std::int64_t lead = run.q_first > 0 ? run.q_first + (d - stride) : 0;
    std::int64_t trail = run.q_last + stride;
    if (cfg.trim_trailing && run.hull_end < m) trail = std::min(trail, run.hull_end - (d - stride));
    trail = std::min(trail, run.hull_end);
    lead = std::min(lead, trail);

    auto residuals = [&](std::int64_t lo, std::int64_t hi) {
      // One annihilation set for the whole range: per-bucket sets would step
      // the in-band gain wherever a co-accepted slot enters or leaves the
      // union, and the change-point search would lock onto that step instead
      // of the band edge. Keep the most widespread co-accepted slots if the
      // row budget cannot annihilate them all.
      std::vector<std::int64_t> presence(static_cast<std::size_t>(Y.config.alpha), 0);
      for (std::int64_t b = lo; b < hi; ++b)
        for (int s : scan.buckets[static_cast<std::size_t>(b)].occupied_slots)
          if (s != run.slot) ++presence[static_cast<std::size_t>(s)];
      std::vector<int> others;
      for (int s = 0; s < Y.config.alpha; ++s)
        if (presence[static_cast<std::size_t>(s)] > 0) others.push_back(s);
      std::sort(others.begin(), others.end(), [&](int a, int b) {
        return presence[static_cast<std::size_t>(a)] > presence[static_cast<std::size_t>(b)];
      });
      if (static_cast<int>(others.size()) > Y.config.r - 1)
        others.resize(static_cast<std::size_t>(Y.config.r - 1));
      std::vector<double> e;
      e.reserve(static_cast<std::size_t>(hi - lo));
      for (std::int64_t b = lo; b < hi; ++b)
        e.push_back(detail::slot_matched_residual(Y, b, run.slot, others));
      return e;
    };

    bool edge_found = false;
    if (cfg.refine_boundaries) {
      const std::int64_t lead_lo = std::max<std::int64_t>(0, run.q_first - d);
      const std::int64_t lead_hi = std::min(m, run.q_first + 2 * d);
      if (lead_hi - lead_lo >= 3)
        if (auto cp = detail::refined_edge(residuals(lead_lo, lead_hi), lead_lo, true)) {
          lead = *cp;
          edge_found = true;
        }
      const std::int64_t trail_lo = std::max<std::int64_t>(0, run.hull_end - 2 * d);
      const std::int64_t trail_hi = std::min(m, run.hull_end + d);
      if (trail_hi - trail_lo >= 3)
        if (auto cp = detail::refined_edge(residuals(trail_lo, trail_hi), trail_lo, false)) {
          trail = *cp;
          edge_found = true;
        }
      // A run whose target-slot profile shows no localizable boundary on
      // either side carries no energy of its own: it is the footprint of
      // another slot's occupant leaking through the acceptance test (the
      // annihilation removes every co-accepted slot exactly, so a real
      // occupant always leaves a step). Drop it.
      if (!edge_found) continue;
    }

    // Support must stay inside the accepted coverage: every reported bucket
    // carries this slot in its scan decision.
    lead = std::max(lead, run.q_first);
    trail = std::min(trail, run.hull_end);
    if (trail <= lead) continue;

    auto emit = [&](std::int64_t a, std::int64_t b) {
      intervals.emplace_back(bin_of(a, run.slot, Y.config),
                             bin_of(b - 1, run.slot, Y.config) + 1);
    };

    if (!cfg.refine_boundaries || trail - lead < 6) {
      emit(lead, trail);
      continue;
    }

    // Two same-slot bands separated by less than a window merge into one
    // run; excavate interior gaps where the residual drops far below both
    // flanks (three-segment valley fit, 4x mean contrast), recursively.
    const std::vector<double> prof = residuals(lead, trail);
    std::vector<double> pref(prof.size() + 1, 0.0);
    for (std::size_t i = 0; i < prof.size(); ++i) pref[i + 1] = pref[i] + prof[i];
    auto mean_of = [&](std::int64_t a, std::int64_t b) {
      return (pref[static_cast<std::size_t>(b - lead)] - pref[static_cast<std::size_t>(a - lead)]) /
             static_cast<double>(b - a);
    };
    std::vector<std::pair<std::int64_t, std::int64_t>> work{{lead, trail}}, pieces;
    while (!work.empty()) {
      const auto [a, b] = work.back();
      work.pop_back();
      bool split_done = false;
      if (b - a >= 6) {
        const std::vector<double> seg(prof.begin() + static_cast<std::ptrdiff_t>(a - lead),
                                      prof.begin() + static_cast<std::ptrdiff_t>(b - lead));
        if (auto gap_pts = detail::valley_change_points(seg, a)) {
          const auto [g1, g2] = *gap_pts;
          const double gap = mean_of(g1, g2);
          const double flank = std::min(mean_of(a, g1), mean_of(g2, b));
          // In-band bin energies are roughly exponential, so a short weak
          // stretch is common; demand the gap sum sit in the 1e-6 lower
          // tail of Gamma(n_gap,1) scaled by the weaker flank mean before
          // splitting the run.
          const auto n_gap = static_cast<int>(g2 - g1);
          const bool significant = flank > 0.0 &&
                                   2.0 * gap * static_cast<double>(n_gap) / flank <
                                       chi2_quantile_even(n_gap, 1e-6);
          if (gap < 0.25 * flank && significant) {
            work.emplace_back(a, g1);
            work.emplace_back(g2, b);
            split_done = true;
          }
        }
      }
      if (!split_done) pieces.emplace_back(a, b);
    }
    for (const auto& [a, b] : pieces) emit(a, b);
  }
  return normalize_support(std::move(intervals), bin_width_hz);
}

}  // namespace flp
