#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "flp/detector.hpp"
#include "flp/io.hpp"
#include "flp/siggen.hpp"
#include "flp/stats.hpp"

namespace flp {

struct HistogramOptions {
  std::vector<double> noise_powers{1.0, 5.0};
  std::vector<std::int64_t> d_values{10000};
};

struct RocOptions {
  std::vector<double> p_f_grid{0.001, 0.003, 0.01, 0.03, 0.1, 0.3};
};

struct WeightOptions {
  std::vector<int> collision_counts{1, 2, 3};
};

struct ExperimentConfig {
  MultibandSpec scene;
  CosetConfig coset;
  DetectorConfig detector;
  std::vector<double> snr_db_grid{0.0, -10.0};
  int trials = 100;
  std::uint64_t seed = 1234;
  std::string out_dir = "out";
  HistogramOptions hist;
  RocOptions roc;
  WeightOptions weights;

  void validate() const {
    scene.validate();
    coset.validate();
    require(coset.n_samples == scene.n_samples,
            "ExperimentConfig: coset n_samples must match scene n_samples");
    detector.validate(coset);
    require(trials >= 1, "ExperimentConfig: trials must be >= 1");
    require(!snr_db_grid.empty(), "ExperimentConfig: snr_db_grid must be non-empty");
    require(!hist.noise_powers.empty() && !hist.d_values.empty(),
            "ExperimentConfig: histogram grids must be non-empty");
    require(!roc.p_f_grid.empty(), "ExperimentConfig: roc p_f grid must be non-empty");
    for (double p : roc.p_f_grid)
      require(p > 0.0 && p < 1.0, "ExperimentConfig: roc p_f values must be in (0,1)");
  }
};

// Desk-scaled default: frequencies 1/1000 of the reference rig, so the whole
// pipeline runs in-memory while keeping every ratio (occupancy, window to
// band width, per-bin SNR) intact.
inline ExperimentConfig desk_default_config() {
  ExperimentConfig cfg;
  cfg.scene.f_nyq_hz = 100e3;
  cfg.scene.n_samples = 100000;
  cfg.scene.max_subbands = 3;
  cfg.scene.b_max_hz = 5e3;
  for (double fc : {32.5e3, 42.5e3, 72.5e3})
    cfg.scene.subbands.push_back(
        SubbandSpec{fc, 3e3, Modulation::QPSK, 1.0, PulseShape::Rect, 0.25});
  cfg.coset = CosetConfig{100000, 10, 4, 1};
  cfg.detector.d = 10000;
  cfg.detector.n_s = 3;
  cfg.detector.p_f = 0.01;
  return cfg;
}

inline void to_json(json& j, const ExperimentConfig& cfg) {
  j = json{{"scene", cfg.scene},
           {"coset", cfg.coset},
           {"detector", cfg.detector},
           {"snr_db_grid", cfg.snr_db_grid},
           {"trials", cfg.trials},
           {"seed", cfg.seed},
           {"outputs", cfg.out_dir},
           {"hist", json{{"noise_powers", cfg.hist.noise_powers}, {"d_values", cfg.hist.d_values}}},
           {"roc", json{{"p_f_grid", cfg.roc.p_f_grid}}},
           {"weights", json{{"collision_counts", cfg.weights.collision_counts}}}};
}

inline void from_json(const json& j, ExperimentConfig& cfg) {
  cfg = desk_default_config();
  if (j.contains("scene")) cfg.scene = j.at("scene").get<MultibandSpec>();
  if (j.contains("coset")) cfg.coset = j.at("coset").get<CosetConfig>();
  if (j.contains("detector")) cfg.detector = j.at("detector").get<DetectorConfig>();
  if (j.contains("snr_db_grid")) cfg.snr_db_grid = j.at("snr_db_grid").get<std::vector<double>>();
  if (j.contains("trials")) cfg.trials = j.at("trials").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("outputs")) cfg.out_dir = j.at("outputs").get<std::string>();
  if (j.contains("hist")) {
    const auto& h = j.at("hist");
    if (h.contains("noise_powers")) cfg.hist.noise_powers = h.at("noise_powers").get<std::vector<double>>();
    if (h.contains("d_values")) cfg.hist.d_values = h.at("d_values").get<std::vector<std::int64_t>>();
  }
  if (j.contains("roc") && j.at("roc").contains("p_f_grid"))
    cfg.roc.p_f_grid = j.at("roc").at("p_f_grid").get<std::vector<double>>();
  if (j.contains("weights") && j.at("weights").contains("collision_counts"))
    cfg.weights.collision_counts = j.at("weights").at("collision_counts").get<std::vector<int>>();
}

// Fixed-count worker pool; results must be written into per-trial slots so
// aggregation order cannot affect output bytes.
inline void parallel_trials(int trials, const std::function<void(int)>& fn) {
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = std::min<unsigned>(workers, static_cast<unsigned>(trials));
  if (workers <= 1) {
    for (int t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<bool> failed{false};
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= trials || failed.load()) return;
        try {
          fn(t);
        } catch (...) {
          failed.store(true);
          throw;  // surfaces via std::terminate; experiment code must not throw per-trial
        }
      }
    });
  for (auto& th : pool) th.join();
}

struct EnergyDetection {
  std::vector<std::uint8_t> bucket_occupied;
  double threshold = 0.0;
};

// Per-bucket energy across the r streams against a chi-square threshold with
// 2r degrees of freedom at the requested false-alarm rate. The noise
// variance must be known (measured or carried from the noise generator).
inline EnergyDetection energy_detect(const AliasedSpectrumMatrix& Y, double noise_variance,
                                     double p_f) {
  Y.config.validate();
  require(noise_variance > 0.0 && !std::isnan(noise_variance),
          "energy_detect: noise variance must be known and positive");
  require(p_f > 0.0 && p_f < 1.0, "energy_detect: p_f in (0,1)");
  EnergyDetection out;
  out.threshold = 0.5 * noise_variance * chi2_quantile_even(Y.config.r, 1.0 - p_f);
  const std::int64_t m = Y.config.buckets();
  out.bucket_occupied.resize(static_cast<std::size_t>(m));
  for (std::int64_t b = 0; b < m; ++b) {
    double e = 0.0;
    for (int s = 0; s < Y.config.r; ++s) e += std::norm(Y.values(s, b));
    out.bucket_occupied[static_cast<std::size_t>(b)] = e > out.threshold ? 1 : 0;
  }
  return out;
}

// Seed material from a real-valued sweep level (noise power or SNR in dB).
inline std::uint64_t detail_hash_level(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  return splitmix64(bits);
}

namespace detail {

// Re-applies the acceptance rule at a different false-alarm target without
// re-solving the window system.
inline std::vector<int> accepted_at(const WindowRecord& w, const DetectorConfig& cfg,
                                    const CosetConfig& coset, double p_f) {
  const int order = w.coeffs.degree();
  const std::int64_t rows = w.width * (coset.r - order);
  const double xi = detection_threshold(order, rows, p_f, cfg.threshold_mode);
  std::vector<int> out;
  for (int slot : w.evaluation.selected_slots)
    if (w.evaluation.values[static_cast<std::size_t>(slot)].real() < xi) out.push_back(slot);
  return out;
}

}  // namespace detail

struct RocPoint {
  std::string detector;
  double snr_db = 0.0;
  double p_f_target = 0.0;
  double p_f_empirical = 0.0;
  double p_d_empirical = 0.0;
  std::int64_t flagged_occupied = 0;
  std::int64_t flagged_unoccupied = 0;
  std::int64_t occupied_bins = 0;
  std::int64_t unoccupied_bins = 0;
};

struct RocTrialRow {
  std::string detector;
  double snr_db = 0.0;
  double p_f_target = 0.0;
  int trial = 0;
  std::int64_t flagged_occupied = 0;
  std::int64_t flagged_unoccupied = 0;
};

struct RocResult {
  std::vector<RocPoint> points;
  std::vector<RocTrialRow> trial_rows;
  std::int64_t occupied_bins_per_trial = 0;
  std::int64_t unoccupied_bins_per_trial = 0;
};

// Bin-level detection/false-alarm rates for the locator detector (LS and
// TLS), plain bucket-energy detection, and energy detection restricted to
// the locator's slot candidates. One scan per solver per trial; thresholds
// are swept over the evaluation records.
inline RocResult run_roc(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.coset.alpha <= 64, "run_roc: bin accounting supports alpha <= 64");
  const std::int64_t m = cfg.coset.buckets();
  const auto truth = cfg.scene.occupancy_mask();
  std::int64_t occ = 0;
  for (auto v : truth) occ += v;
  const std::int64_t unocc = cfg.scene.n_samples - occ;
  require(occ > 0, "run_roc: scene has no occupied bins");

  struct Counts {
    std::int64_t tp = 0, fp = 0;
  };
  const std::vector<std::string> det_names{"flp_ls", "flp_tls", "ed_plain", "ed_hybrid"};
  // counts[snr][pf][det][trial]
  std::vector<std::vector<std::vector<std::vector<Counts>>>> counts(
      cfg.snr_db_grid.size(),
      std::vector<std::vector<std::vector<Counts>>>(
          cfg.roc.p_f_grid.size(),
          std::vector<std::vector<Counts>>(det_names.size(),
                                           std::vector<Counts>(static_cast<std::size_t>(cfg.trials)))));

  for (std::size_t si = 0; si < cfg.snr_db_grid.size(); ++si) {
    const double snr_db = cfg.snr_db_grid[si];
    parallel_trials(cfg.trials, [&, si, snr_db](int t) {
      const std::uint64_t s0 = derive_seed(cfg.seed, 1000003ull * si + static_cast<std::uint64_t>(t));
      const auto clean = synthesize_multiband(cfg.scene, derive_seed(s0, 1));
      const auto noisy = add_awgn(clean, snr_db, derive_seed(s0, 2));
      const auto Y = coset_dft(coset_sample(noisy.series, cfg.coset));

      DetectorConfig dls = cfg.detector;
      dls.solver = SolverKind::LS;
      DetectorConfig dtls = cfg.detector;
      dtls.solver = SolverKind::TLS;
      const auto scan_ls = scan_spectrum(Y, dls);
      const auto scan_tls = scan_spectrum(Y, dtls);

      // Slot candidates per bucket from the LS ranking stage (union over
      // covering windows), used by the support-restricted energy detector.
      std::vector<std::uint64_t> cand_mask(static_cast<std::size_t>(m), 0);
      for (const auto& w : scan_ls.windows)
        for (std::int64_t b = w.start; b < w.start + w.width; ++b)
          for (int slot : w.evaluation.selected_slots)
            cand_mask[static_cast<std::size_t>(b)] |= 1ull << slot;

      std::vector<double> bucket_energy(static_cast<std::size_t>(m), 0.0);
      for (std::int64_t b = 0; b < m; ++b)
        for (int s = 0; s < cfg.coset.r; ++s)
          bucket_energy[static_cast<std::size_t>(b)] += std::norm(Y.values(s, b));

      auto tally_mask = [&](const std::vector<std::uint64_t>& mask, Counts& c) {
        for (std::int64_t b = 0; b < m; ++b) {
          std::uint64_t bits = mask[static_cast<std::size_t>(b)];
          while (bits) {
            const int slot = std::countr_zero(bits);
            bits &= bits - 1;
            const std::int64_t f = b + static_cast<std::int64_t>(slot) * m;
            if (truth[static_cast<std::size_t>(f)])
              ++c.tp;
            else
              ++c.fp;
          }
        }
      };

      for (std::size_t pi = 0; pi < cfg.roc.p_f_grid.size(); ++pi) {
        const double pf = cfg.roc.p_f_grid[pi];

        for (int det = 0; det < 2; ++det) {
          const auto& scan = det == 0 ? scan_ls : scan_tls;
          std::vector<std::uint64_t> mask(static_cast<std::size_t>(m), 0);
          for (const auto& w : scan.windows) {
            const auto acc = detail::accepted_at(w, cfg.detector, cfg.coset, pf);
            for (std::int64_t b = w.start; b < w.start + w.width; ++b)
              for (int slot : acc) mask[static_cast<std::size_t>(b)] |= 1ull << slot;
          }
          tally_mask(mask, counts[si][pi][static_cast<std::size_t>(det)][static_cast<std::size_t>(t)]);
        }

        const double thr =
            0.5 * noisy.noise_variance * chi2_quantile_even(cfg.coset.r, 1.0 - pf);
        std::vector<std::uint64_t> plain(static_cast<std::size_t>(m), 0);
        std::vector<std::uint64_t> hybrid(static_cast<std::size_t>(m), 0);
        const std::uint64_t all = cfg.coset.alpha >= 64
                                      ? ~0ull
                                      : ((1ull << cfg.coset.alpha) - 1ull);
        for (std::int64_t b = 0; b < m; ++b) {
          if (bucket_energy[static_cast<std::size_t>(b)] <= thr) continue;
          plain[static_cast<std::size_t>(b)] = all;
          hybrid[static_cast<std::size_t>(b)] = cand_mask[static_cast<std::size_t>(b)];
        }
        tally_mask(plain, counts[si][pi][2][static_cast<std::size_t>(t)]);
        tally_mask(hybrid, counts[si][pi][3][static_cast<std::size_t>(t)]);
      }
    });
  }

  RocResult res;
  res.occupied_bins_per_trial = occ;
  res.unoccupied_bins_per_trial = unocc;
  for (std::size_t si = 0; si < cfg.snr_db_grid.size(); ++si)
    for (std::size_t pi = 0; pi < cfg.roc.p_f_grid.size(); ++pi)
      for (std::size_t det = 0; det < det_names.size(); ++det) {
        RocPoint pt;
        pt.detector = det_names[det];
        pt.snr_db = cfg.snr_db_grid[si];
        pt.p_f_target = cfg.roc.p_f_grid[pi];
        pt.occupied_bins = occ * cfg.trials;
        pt.unoccupied_bins = unocc * cfg.trials;
        for (int t = 0; t < cfg.trials; ++t) {
          const auto& c = counts[si][pi][det][static_cast<std::size_t>(t)];
          pt.flagged_occupied += c.tp;
          pt.flagged_unoccupied += c.fp;
          res.trial_rows.push_back(RocTrialRow{det_names[det], cfg.snr_db_grid[si],
                                               cfg.roc.p_f_grid[pi], t, c.tp, c.fp});
        }
        pt.p_d_empirical = static_cast<double>(pt.flagged_occupied) /
                           static_cast<double>(pt.occupied_bins);
        pt.p_f_empirical = static_cast<double>(pt.flagged_unoccupied) /
                           static_cast<double>(pt.unoccupied_bins);
        res.points.push_back(std::move(pt));
      }
  return res;
}

struct HistSampleRow {
  std::string mode;  // "noise" or "signal"
  std::int64_t d = 0;
  double level = 0.0;  // noise power, or snr_db in signal mode
  int trial = 0;
  int candidate = 0;
  double re = 0.0;
  double im = 0.0;
  double abs = 0.0;
};

struct HistSummaryRow {
  std::string mode;
  std::int64_t d = 0;
  double level = 0.0;
  int candidate = 0;
  double mean_re = 0.0;
  double var_re = 0.0;
  double theory_var_re = 0.0;
};

struct HistogramResult {
  std::vector<HistSampleRow> samples;
  std::vector<HistSummaryRow> summary;
};

// Evaluation-statistic histograms: pure noise across (d, power) pairs, and
// the configured scene across the SNR grid. Every candidate's evaluation at
// the solved window's start bucket is recorded per trial.
inline HistogramResult run_histogram_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  HistogramResult res;
  const std::int64_t m = cfg.coset.buckets();
  const int alpha = cfg.coset.alpha;

  auto summarize = [&](const std::string& mode, std::int64_t d, double level,
                       const std::vector<CandidateEvaluation>& evs, double theory_var) {
    for (int cand = 0; cand < alpha; ++cand) {
      HistSummaryRow s;
      s.mode = mode;
      s.d = d;
      s.level = level;
      s.candidate = cand;
      s.theory_var_re = theory_var;
      double mean = 0.0;
      for (const auto& ev : evs) mean += ev.values[static_cast<std::size_t>(cand)].real();
      mean /= static_cast<double>(evs.size());
      double var = 0.0;
      for (const auto& ev : evs) {
        const double dlt = ev.values[static_cast<std::size_t>(cand)].real() - mean;
        var += dlt * dlt;
      }
      var /= static_cast<double>(evs.size() - 1);
      s.mean_re = mean;
      s.var_re = var;
      res.summary.push_back(std::move(s));
    }
  };

  auto record = [&](const std::string& mode, std::int64_t d, double level,
                    const std::vector<CandidateEvaluation>& evs) {
    for (int t = 0; t < static_cast<int>(evs.size()); ++t)
      for (int cand = 0; cand < alpha; ++cand) {
        const auto v = evs[static_cast<std::size_t>(t)].values[static_cast<std::size_t>(cand)];
        res.samples.push_back(
            HistSampleRow{mode, d, level, t, cand, v.real(), v.imag(), std::abs(v)});
      }
  };

  for (std::int64_t d : cfg.hist.d_values) {
    require(d >= 1 && d <= m, "run_histogram_experiment: d exceeds bucket count");
    for (double power : cfg.hist.noise_powers) {
      require(power > 0.0, "run_histogram_experiment: noise power must be positive");
      std::vector<CandidateEvaluation> evs(static_cast<std::size_t>(cfg.trials));
      parallel_trials(cfg.trials, [&, d, power](int t) {
        const std::uint64_t s =
            derive_seed(cfg.seed, splitmix64(static_cast<std::uint64_t>(d)) ^
                                      detail_hash_level(power) ^ static_cast<std::uint64_t>(t));
        const auto noise = awgn_series(cfg.coset.n_samples, power, cfg.scene.f_nyq_hz, s);
        const auto Y = coset_dft(coset_sample(noise, cfg.coset));
        const auto sys = build_window_system(Y, 0, d, cfg.detector.n_s);
        const auto coeffs =
            cfg.detector.solver == SolverKind::TLS ? solve_tls(sys) : solve_ls(sys);
        evs[static_cast<std::size_t>(t)] = evaluate_candidates(coeffs, 0, cfg.coset);
      });
      const double theory =
          pure_noise_stats(cfg.detector.n_s, d * (cfg.coset.r - cfg.detector.n_s))
              .real_part_variance;
      record("noise", d, power, evs);
      summarize("noise", d, power, evs, theory);
    }
  }

  if (!cfg.scene.subbands.empty()) {
    const std::int64_t d = std::min<std::int64_t>(cfg.detector.d, m);
    for (double snr_db : cfg.snr_db_grid) {
      std::vector<CandidateEvaluation> evs(static_cast<std::size_t>(cfg.trials));
      parallel_trials(cfg.trials, [&, snr_db](int t) {
        const std::uint64_t s =
            derive_seed(cfg.seed, 0x5157ull ^ detail_hash_level(snr_db) ^
                                      static_cast<std::uint64_t>(t));
        const auto clean = synthesize_multiband(cfg.scene, derive_seed(s, 1));
        const auto noisy = add_awgn(clean, snr_db, derive_seed(s, 2));
        const auto Y = coset_dft(coset_sample(noisy.series, cfg.coset));
        const auto sys = build_window_system(Y, 0, d, cfg.detector.n_s);
        const auto coeffs =
            cfg.detector.solver == SolverKind::TLS ? solve_tls(sys) : solve_ls(sys);
        evs[static_cast<std::size_t>(t)] = evaluate_candidates(coeffs, 0, cfg.coset);
      });
      record("signal", d, snr_db, evs);
      summarize("signal", d, snr_db, evs, 0.0);
    }
  }
  return res;
}

struct EstimationRow {
  int trial = 0;
  double snr_db = 0.0;
  int band = 0;  // index into the true subband list, carrier-sorted
  double true_carrier_hz = 0.0;
  double est_carrier_hz = 0.0;
  double true_bandwidth_hz = 0.0;
  double est_bandwidth_hz = 0.0;
  int n_detected = 0;
};

struct EstimationResult {
  std::vector<EstimationRow> rows;
};

// Full pipeline to band parameters; each detected band is matched to the
// nearest true carrier. Unmatched truths appear with NaN estimates.
inline EstimationResult run_estimation(const ExperimentConfig& cfg) {
  cfg.validate();
  require(!cfg.scene.subbands.empty(), "run_estimation: scene has no subbands");
  EstimationResult res;
  const double bw_hz = cfg.scene.bin_width_hz();

  auto truths = cfg.scene.occupied_intervals();
  std::vector<Band> true_bands;
  for (const auto& iv : truths)
    true_bands.push_back(Band{0.5 * static_cast<double>(iv.lo + iv.hi) * bw_hz,
                              static_cast<double>(iv.hi - iv.lo) * bw_hz});

  std::vector<std::vector<EstimationRow>> per_trial(static_cast<std::size_t>(cfg.trials));
  for (double snr_db : cfg.snr_db_grid) {
    parallel_trials(cfg.trials, [&, snr_db](int t) {
      const std::uint64_t s =
          derive_seed(cfg.seed, 0xE57ull ^ detail_hash_level(snr_db) ^
                                    static_cast<std::uint64_t>(t));
      const auto clean = synthesize_multiband(cfg.scene, derive_seed(s, 1));
      const auto noisy = add_awgn(clean, snr_db, derive_seed(s, 2));
      const auto Y = coset_dft(coset_sample(noisy.series, cfg.coset));
      const auto scan = scan_spectrum(Y, cfg.detector);
      const auto support = resolve_boundaries(scan, Y, cfg.detector, bw_hz);
      for (std::size_t k = 0; k < true_bands.size(); ++k) {
        EstimationRow row;
        row.trial = t;
        row.snr_db = snr_db;
        row.band = static_cast<int>(k);
        row.true_carrier_hz = true_bands[k].carrier_hz;
        row.true_bandwidth_hz = true_bands[k].bandwidth_hz;
        row.n_detected = support.n_detected;
        row.est_carrier_hz = std::numeric_limits<double>::quiet_NaN();
        row.est_bandwidth_hz = std::numeric_limits<double>::quiet_NaN();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : support.bands) {
          const double dist = std::abs(b.carrier_hz - true_bands[k].carrier_hz);
          if (dist < best) {
            best = dist;
            row.est_carrier_hz = b.carrier_hz;
            row.est_bandwidth_hz = b.bandwidth_hz;
          }
        }
        per_trial[static_cast<std::size_t>(t)].push_back(std::move(row));
      }
    });
  }
  for (auto& rows : per_trial)
    for (auto& r : rows) res.rows.push_back(std::move(r));
  return res;
}

struct WeightRow {
  int collisions = 0;
  int slot = 0;
  bool true_root = false;
  double avg_magnitude = 0.0;
};

struct WeightResult {
  std::vector<WeightRow> rows;
  double snr_db = 0.0;
};

// Average candidate-evaluation magnitudes for scenes with 1, 2 or 3 bands
// folded into the same buckets, one whole-spectrum window per trial.
inline WeightResult run_weight_profile(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.coset.alpha >= 8, "run_weight_profile: needs alpha >= 8");
  WeightResult res;
  res.snr_db = cfg.snr_db_grid.empty() ? -10.0 : cfg.snr_db_grid.front();
  const std::int64_t m = cfg.coset.buckets();
  const std::int64_t d = std::min<std::int64_t>(cfg.detector.d, m);

  for (int ni : cfg.weights.collision_counts) {
    require(ni >= 1 && ni <= cfg.detector.n_s, "run_weight_profile: collisions must be in [1, n_s]");
    MultibandSpec scene;
    scene.f_nyq_hz = cfg.scene.f_nyq_hz;
    scene.n_samples = cfg.scene.n_samples;
    scene.max_subbands = cfg.scene.max_subbands;
    scene.b_max_hz = cfg.scene.b_max_hz;
    const double bw_hz = scene.bin_width_hz();
    // Bands parked in adjacent slots over the same bucket range [m/5, 4m/5).
    const std::int64_t b_lo = m / 5, b_hi = 4 * (m / 5);
    std::vector<int> slots;
    for (int k = 0; k < ni; ++k) slots.push_back(3 + k);
    for (int slot : slots) {
      const double lo = static_cast<double>(bin_of(b_lo, slot, cfg.coset)) * bw_hz;
      const double hi = static_cast<double>(bin_of(b_hi - 1, slot, cfg.coset) + 1) * bw_hz;
      scene.subbands.push_back(SubbandSpec{0.5 * (lo + hi), hi - lo,
                                           Modulation::FlatComplexGaussian, 1.0,
                                           PulseShape::Rect, 0.25});
    }
    scene.b_max_hz = std::max(scene.b_max_hz, static_cast<double>(b_hi - b_lo) * bw_hz + bw_hz);
    scene.validate();

    std::vector<std::vector<double>> mags(
        static_cast<std::size_t>(cfg.trials), std::vector<double>(static_cast<std::size_t>(cfg.coset.alpha)));
    parallel_trials(cfg.trials, [&, ni](int t) {
      const std::uint64_t s = derive_seed(cfg.seed, 0x3E16ull ^ (static_cast<std::uint64_t>(ni) << 32) ^
                                                        static_cast<std::uint64_t>(t));
      const auto clean = synthesize_multiband(scene, derive_seed(s, 1));
      const auto noisy = add_awgn(clean, res.snr_db, derive_seed(s, 2));
      const auto Y = coset_dft(coset_sample(noisy.series, cfg.coset));
      const auto sys = build_window_system(Y, b_lo, std::min<std::int64_t>(d, m - b_lo),
                                           cfg.detector.n_s);
      const auto coeffs = cfg.detector.solver == SolverKind::TLS ? solve_tls(sys) : solve_ls(sys);
      const auto ev = evaluate_candidates(coeffs, b_lo, cfg.coset);
      mags[static_cast<std::size_t>(t)] = ev.magnitudes;
    });

    for (int slot = 0; slot < cfg.coset.alpha; ++slot) {
      WeightRow row;
      row.collisions = ni;
      row.slot = slot;
      row.true_root = std::find(slots.begin(), slots.end(), slot) != slots.end();
      double acc = 0.0;
      for (const auto& v : mags) acc += v[static_cast<std::size_t>(slot)];
      row.avg_magnitude = acc / static_cast<double>(cfg.trials);
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

// --- output helpers -------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  require(f.good(), "write_csv: cannot open " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    f << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      f << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
  require(f.good(), "write_csv: write failed for " + path.string());
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& verb,
                           const json& resolved_config) {
  json j{{"schema", 1}, {"verb", verb}, {"config", resolved_config},
#ifdef FLP_BUILD_ID
         {"build", FLP_BUILD_ID}
#else
         {"build", "unknown"}
#endif
  };
  std::ofstream f(dir / "manifest.json");
  require(f.good(), "write_manifest: cannot open manifest in " + dir.string());
  f << j.dump(2) << "\n";
}

}  // namespace flp
