#include <catch2/catch_amalgamated.hpp>

#include <flp/flpcore.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "support/scenes.hpp"

using namespace flp;
using Catch::Approx;

namespace {

// |G(z)| evaluated straight from the root product, bypassing the coefficient
// expansion: the independent route for the constant checks.
double direct_magnitude(const std::vector<int>& slots, int probe, std::int64_t bucket,
                        const CosetConfig& cfg) {
  const auto roots = candidate_roots(bucket, cfg);
  cplx g = 1.0;
  for (int l : slots) g *= 1.0 - std::conj(roots[static_cast<std::size_t>(l)]) * roots[static_cast<std::size_t>(probe)];
  return std::abs(g);
}

double eval_magnitude(const FlpCoefficients& coeffs, std::int64_t bucket, int probe,
                      const CosetConfig& cfg) {
  return evaluate_candidates(coeffs, bucket, cfg).magnitudes[static_cast<std::size_t>(probe)];
}

const CosetConfig kCfg{20000, 10, 4, 1};

}  // namespace

TEST_CASE("exact locator polynomial zeros its roots") {
  SECTION("single root") {
    const auto coeffs = exact_flp({2}, 7, kCfg);
    REQUIRE(coeffs.degree() == 1);
    const auto roots = candidate_roots(7, kCfg);
    REQUIRE(std::abs(coeffs.a(0) + std::conj(roots[2])) < 1e-15);
    REQUIRE(eval_magnitude(coeffs, 7, 2, kCfg) < 1e-14);
  }
  SECTION("full product over all slots") {
    std::vector<int> all(10);
    for (int l = 0; l < 10; ++l) all[static_cast<std::size_t>(l)] = l;
    const auto coeffs = exact_flp(all, 3, kCfg);
    for (int l = 0; l < 10; ++l) REQUIRE(eval_magnitude(coeffs, 3, l, kCfg) < 1e-12);
  }
  SECTION("empty slot set is rejected") {
    REQUIRE_THROWS_AS(exact_flp({}, 0, kCfg), invalid_config);
    REQUIRE_THROWS_AS(exact_flp({10}, 0, kCfg), invalid_config);
  }
}

TEST_CASE("candidate roots are the rotated alpha-th roots of unity") {
  const auto r0 = candidate_roots(0, kCfg);
  REQUIRE(r0.size() == 10);
  for (int l = 0; l < 10; ++l) {
    REQUIRE(std::abs(std::abs(r0[static_cast<std::size_t>(l)]) - 1.0) < 1e-12);
    REQUIRE(std::abs(r0[static_cast<std::size_t>(l)] - unit_phasor(l, 10)) < 1e-12);
  }
  // Any bucket's set is the bucket-0 set rotated by a common phase.
  const auto r5 = candidate_roots(5, kCfg);
  const cplx rot = unit_phasor(5, kCfg.n_samples);
  for (int l = 0; l < 10; ++l)
    REQUIRE(std::abs(r5[static_cast<std::size_t>(l)] - r0[static_cast<std::size_t>(l)] * rot) < 1e-12);
  // Pairwise angular spacing 2*pi/alpha.
  for (int l = 0; l < 10; ++l) {
    const cplx ratio = r0[static_cast<std::size_t>((l + 1) % 10)] / r0[static_cast<std::size_t>(l)];
    REQUIRE(std::arg(ratio) == Approx(2.0 * kPi / 10.0).margin(1e-12));
  }
  REQUIRE_THROWS_AS(candidate_roots(kCfg.buckets(), kCfg), invalid_config);
}

TEST_CASE("worst-case off-root magnitudes at alpha 10") {
  // Probe adjacent to one root; probe between two roots; probe flanked at
  // distances (1,1,2) — and the contiguous-set probe, which differs.
  REQUIRE(direct_magnitude({1}, 0, 0, kCfg) == Approx(0.6180).margin(1e-3));
  REQUIRE(direct_magnitude({1, 9}, 0, 0, kCfg) == Approx(0.3820).margin(1e-3));
  REQUIRE(direct_magnitude({1, 9, 2}, 0, 0, kCfg) == Approx(0.4490).margin(1e-3));
  REQUIRE(direct_magnitude({1, 2, 3}, 0, 0, kCfg) == Approx(1.1756).margin(1e-3));

  const auto consts = detail::worst_case_constants(10);
  REQUIRE(consts[0] == Approx(0.618034).margin(1e-4));
  REQUIRE(consts[1] == Approx(0.381966).margin(1e-4));
  REQUIRE(consts[2] == Approx(0.449028).margin(1e-4));

  // Coefficient-expansion route agrees with the direct product route.
  for (const auto& slots : std::vector<std::vector<int>>{{1}, {1, 9}, {1, 9, 2}, {4, 5, 6}})
    for (int probe = 0; probe < 10; ++probe)
      REQUIRE(eval_magnitude(exact_flp(slots, 11, kCfg), 11, probe, kCfg) ==
              Approx(direct_magnitude(slots, probe, 11, kCfg)).margin(1e-12));
}

TEST_CASE("candidate evaluation selection and ties") {
  SECTION("single occupied slot stands clear of the 0.618 floor") {
    const auto ev = evaluate_candidates(exact_flp({2}, 7, kCfg), 7, kCfg);
    REQUIRE(ev.magnitudes[2] < 1e-12);
    for (int l = 0; l < 10; ++l)
      if (l != 2) REQUIRE(ev.magnitudes[static_cast<std::size_t>(l)] >= 0.618 - 1e-3);
    REQUIRE(ev.selected_slots == std::vector<int>{2});
  }
  SECTION("zero coefficients evaluate to one everywhere; ties break low") {
    FlpCoefficients flat;
    flat.a = Eigen::VectorXcd::Zero(3);
    const auto ev = evaluate_candidates(flat, 4, kCfg);
    for (int l = 0; l < 10; ++l) {
      REQUIRE(std::abs(ev.values[static_cast<std::size_t>(l)] - cplx{1.0, 0.0}) < 1e-15);
      REQUIRE(ev.magnitudes[static_cast<std::size_t>(l)] == Approx(1.0));
    }
    REQUIRE(ev.selected_slots == std::vector<int>{0, 1, 2});
  }
  SECTION("three roots with the 0.449 geometry") {
    const auto ev = evaluate_candidates(exact_flp({1, 9, 2}, 0, kCfg), 0, kCfg);
    REQUIRE(ev.selected_slots == std::vector<int>{1, 2, 9});
    double off_min = 1e9;
    for (int l = 0; l < 10; ++l)
      if (l != 1 && l != 2 && l != 9) off_min = std::min(off_min, ev.magnitudes[static_cast<std::size_t>(l)]);
    REQUIRE(off_min == Approx(0.4490).margin(1e-3));
  }
}

TEST_CASE("window system layout follows the pooled annihilation equations") {
  const CosetConfig cfg{40, 4, 3, 1};
  auto Y = scenes::forge_noise(cfg, cfg.buckets(), 1.0, 77);
  SECTION("single-bucket window is the untwisted block") {
    const auto sys = build_window_system(Y, 2, 1, 1);
    REQUIRE(sys.rows() == 2);  // r - n rows
    for (int t = 0; t < 2; ++t) {
      REQUIRE(std::abs(sys.y2(t) - Y.values(t, 2)) < 1e-15);
      REQUIRE(std::abs(sys.y1(t, 0) - Y.values(t + 1, 2)) < 1e-15);
    }
  }
  SECTION("twist weights on later buckets") {
    const auto sys = build_window_system(Y, 2, 3, 1);
    // Row block m=1, t=0: y2 = theta^{0} Y_0(3)...; y1 entry s=1 gets theta^{-1*1}.
    const cplx tw = unit_phasor(-1, cfg.n_samples);
    REQUIRE(std::abs(sys.y1(2, 0) - tw * Y.values(1, 3)) < 1e-15);
    REQUIRE(std::abs(sys.y2(2) - Y.values(0, 3)) < 1e-15);
  }
  SECTION("all-zero data gives the all-zero system") {
    Y.values.setZero();
    const auto sys = build_window_system(Y, 0, 5, 2);
    REQUIRE(sys.y1.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(sys.y2.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("validation") {
    REQUIRE_THROWS_AS(build_window_system(Y, 8, 5, 1), invalid_config);   // leaves range
    REQUIRE_THROWS_AS(build_window_system(Y, 0, 5, 3), invalid_config);   // n >= r
    REQUIRE_THROWS_AS(build_window_system(Y, 0, 1, 2), invalid_config);   // r < 2n and d < n
  }
}

TEST_CASE("noiseless solves recover the exact locator") {
  SECTION("one tone, degree one") {
    const auto Y = scenes::forge_slots(kCfg, 64, {{5, 1.0}}, 0.0, 9);
    const auto sys = build_window_system(Y, 0, 64, 1);
    const auto ls = solve_ls(sys);
    const auto truth = exact_flp({5}, 0, kCfg);
    REQUIRE_FALSE(ls.degenerate);
    REQUIRE((ls.a - truth.a).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("three flat occupants, d=16, r=4, n=3; TLS matches LS") {
    const auto Y = scenes::forge_slots(kCfg, 16, {{1, 1.0}, {4, 0.5}, {8, 2.0}}, 0.0, 10);
    const auto sys = build_window_system(Y, 0, 16, 3);
    const auto ls = solve_ls(sys);
    const auto tls = solve_tls(sys);
    const auto truth = exact_flp({1, 4, 8}, 0, kCfg);
    REQUIRE((ls.a - truth.a).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE((tls.a - ls.a).cwiseAbs().maxCoeff() < 1e-9);
    // Residual of the noiseless LS solution is numerically zero.
    REQUIRE((sys.y1 * ls.a + sys.y2).norm() < 1e-9 * sys.y2.norm());
  }
}

TEST_CASE("solver degeneracy flags") {
  const CosetConfig cfg{400, 10, 4, 1};
  SECTION("zero data is rank deficient") {
    auto Y = scenes::forge_noise(cfg, 8, 1.0, 1);
    Y.values.setZero();
    const auto sys = build_window_system(Y, 0, 8, 3);
    REQUIRE(solve_ls(sys).degenerate);
  }
  SECTION("too few rows sends TLS to the LS fallback") {
    const auto Y = scenes::forge_noise(cfg, 3, 1.0, 2);
    const auto sys = build_window_system(Y, 0, 3, 3);  // rows == n
    const auto tls = solve_tls(sys);
    REQUIRE(tls.degenerate);
    REQUIRE(tls.method == FlpMethod::TLS);
  }
  SECTION("pure-noise windows are well conditioned") {
    const auto Y = scenes::forge_noise(cfg, 40, 1.0, 3);
    const auto sys = build_window_system(Y, 0, 40, 3);
    REQUIRE_FALSE(solve_ls(sys).degenerate);
    REQUIRE_FALSE(solve_tls(sys).degenerate);
  }
}

TEST_CASE("solutions are invariant under joint complex scaling") {
  const auto Y = scenes::forge_slots(kCfg, 32, {{2, 1.0}, {6, 1.0}}, 0.3, 21);
  auto scaled = Y;
  const cplx s{-1.3, 0.7};
  scaled.values *= s;
  const auto sys = build_window_system(Y, 0, 32, 3);
  const auto sys2 = build_window_system(scaled, 0, 32, 3);
  for (bool tls : {false, true}) {
    const auto a1 = tls ? solve_tls(sys) : solve_ls(sys);
    const auto a2 = tls ? solve_tls(sys2) : solve_ls(sys2);
    REQUIRE((a1.a - a2.a).cwiseAbs().maxCoeff() < 1e-12);
    const auto e1 = evaluate_candidates(a1, 0, kCfg);
    const auto e2 = evaluate_candidates(a2, 0, kCfg);
    for (int l = 0; l < 10; ++l)
      REQUIRE(e1.magnitudes[static_cast<std::size_t>(l)] ==
              Approx(e2.magnitudes[static_cast<std::size_t>(l)]).margin(1e-12));
  }
}

TEST_CASE("tls is optimal in the tls metric") {
  const auto Y = scenes::forge_slots(CosetConfig{40000, 10, 4, 1}, 1000,
                                     {{3, 1.0}, {6, 1.0}, {9, 1.0}}, 0.5, 33);
  const auto sys = build_window_system(Y, 0, 1000, 3);
  const auto ls = solve_ls(sys);
  const auto tls = solve_tls(sys);
  auto metric = [&](const Eigen::VectorXcd& a) {
    return (sys.y1 * a + sys.y2).norm() / std::sqrt(1.0 + a.squaredNorm());
  };
  REQUIRE(metric(tls.a) <= metric(ls.a) + 1e-12);
}

TEST_CASE("annihilation holds bucket-by-bucket on noiseless scenes") {
  // Exhaustive at N = 200: every bucket, every row offset.
  auto rig = scenes::small_rig();
  rig.scene.n_samples = 200;
  rig.scene.f_nyq_hz = 200.0;  // 1 Hz bins
  rig.scene.b_max_hz = 10.0;
  rig.coset.n_samples = 200;
  // Third band collides with the first in buckets 10..13 (slots 2 and 4);
  // the second band crosses a slot boundary (bins 117..124, slots 5 and 6).
  rig.scene.subbands = {scenes::band(52.5, 5.0), scenes::band(121.0, 8.0, Modulation::QPSK),
                        scenes::band(92.0, 4.0)};
  const auto x = synthesize_multiband(rig.scene, 4);
  const auto Y = scenes::aliased(x, rig.coset);
  const double scale = Y.values.cwiseAbs().maxCoeff();
  for (std::int64_t b = 0; b < rig.coset.buckets(); ++b) {
    const auto slots = scenes::bucket_truth_slots(rig.scene, rig.coset, b);
    if (slots.empty()) continue;
    const auto coeffs = exact_flp(slots, b, rig.coset);
    const int n = coeffs.degree();
    for (int t = 0; t + n < rig.coset.r; ++t) {
      cplx acc = Y.values(t, b);
      for (int s = 1; s <= n; ++s) acc += coeffs.a(s - 1) * Y.values(s + t, b);
      REQUIRE(std::abs(acc) < 1e-9 * scale);
    }
  }
}

TEST_CASE("buckets sharing a slot set determine one locator across sub-windows") {
  // Solving a sub-window references its own start bucket; its roots are the
  // bucket-0 roots rotated by e^{j 2 pi k c / N}, so a_s(k) = a_s(0) *
  // e^{-j 2 pi k c s / N}. Translate back to bucket 0 before comparing.
  const auto translate = [](const Eigen::VectorXcd& a, std::int64_t k, const CosetConfig& cfg) {
    Eigen::VectorXcd out = a;
    for (Eigen::Index s = 0; s < a.size(); ++s)
      out(s) *= unit_phasor(k * cfg.shift_step * (s + 1), cfg.n_samples);
    return out;
  };
  // Self-check of the translation on exact coefficients.
  REQUIRE((translate(exact_flp({3, 7}, 9, kCfg).a, 9, kCfg) - exact_flp({3, 7}, 0, kCfg).a)
              .cwiseAbs()
              .maxCoeff() < 1e-12);

  const auto Y = scenes::forge_slots(kCfg, 64, {{3, 1.0}, {7, 0.8}}, 0.0, 55);
  const auto full = solve_ls(build_window_system(Y, 0, 64, 2));
  for (std::int64_t k : {8, 17, 32}) {
    const auto sub = solve_ls(build_window_system(Y, k, 16, 2));
    REQUIRE((translate(sub.a, k, kCfg) - full.a).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("pure-noise evaluation variance halves when the window doubles") {
  const CosetConfig cfg{40000, 10, 4, 1};
  auto variance_at = [&](std::int64_t width, std::uint64_t salt) {
    double sum = 0.0, sum2 = 0.0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
      const auto Y = scenes::forge_noise(cfg, width, 1.0, derive_seed(salt, static_cast<std::uint64_t>(t)));
      const auto coeffs = solve_ls(build_window_system(Y, 0, width, 3));
      const double re = evaluate_candidates(coeffs, 0, cfg).values[0].real();
      sum += re;
      sum2 += re * re;
    }
    const double mean = sum / trials;
    return sum2 / trials - mean * mean;
  };
  const double v1 = variance_at(500, 101);
  const double v2 = variance_at(1000, 202);
  REQUIRE(v1 / v2 == Approx(2.0).margin(0.5));
  // Against the closed form n/(2d) with d = pooled rows = width * (r - n).
  REQUIRE(v1 == Approx(pure_noise_stats(3, 500).real_part_variance).epsilon(0.25));
}
