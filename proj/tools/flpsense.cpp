// flpsense: scene generation, multi-coset sampling, support detection and the
// Monte Carlo experiment verbs, emitting CSV/JSON for external plotting.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "flp/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct VerbOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<double> snr_db;
  std::string in_path;
  double rf_offset_hz = 0.0;
  bool check = false;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_trials = nullptr;
  CLI::Option* o_snr = nullptr;
  CLI::Option* o_out = nullptr;
};

VerbOpts& add_common(CLI::App* sub, std::vector<std::unique_ptr<VerbOpts>>& store) {
  store.push_back(std::make_unique<VerbOpts>());
  VerbOpts& o = *store.back();
  sub->add_option("--config", o.config_path, "JSON experiment config (defaults to the built-in desk scene)");
  o.o_out = sub->add_option("--out", o.out_dir, "Output directory");
  o.o_seed = sub->add_option("--seed", o.seed, "Override config seed");
  o.o_trials = sub->add_option("--trials", o.trials, "Override config trial count");
  o.o_snr = sub->add_option("--snr-db", o.snr_db, "Override the SNR grid (dB); repeatable");
  sub->add_flag("--check", o.check, "Verify output invariants; nonzero exit on violation");
  return o;
}

flp::ExperimentConfig load_config(const VerbOpts& o) {
  flp::ExperimentConfig cfg = flp::desk_default_config();
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    flp::require(f.good(), "cannot open config " + o.config_path);
    cfg = json::parse(f).get<flp::ExperimentConfig>();
  }
  if (o.o_seed->count()) cfg.seed = o.seed;
  if (o.o_trials->count()) cfg.trials = o.trials;
  if (o.o_snr->count()) cfg.snr_db_grid = o.snr_db;
  if (o.o_out->count()) cfg.out_dir = o.out_dir;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const flp::ExperimentConfig& cfg) {
  fs::path out = cfg.out_dir;
  fs::create_directories(out);
  return out;
}

void check_or_throw(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("check failed: " + what);
}

// Clean scene, or the scene in noise when an SNR override is present.
flp::ComplexTimeSeries make_input(const flp::ExperimentConfig& cfg, const VerbOpts& o,
                                  double* noise_variance_out) {
  auto x = flp::synthesize_multiband(cfg.scene, flp::derive_seed(cfg.seed, 1));
  if (noise_variance_out) *noise_variance_out = 0.0;
  if (o.o_snr->count()) {
    auto noisy = flp::add_awgn(x, cfg.snr_db_grid.front(), flp::derive_seed(cfg.seed, 2));
    if (noise_variance_out) *noise_variance_out = noisy.noise_variance;
    return std::move(noisy.series);
  }
  return x;
}

flp::SupportEstimate truth_support(const flp::MultibandSpec& scene) {
  std::vector<std::pair<std::int64_t, std::int64_t>> iv;
  for (const auto& b : scene.occupied_intervals()) iv.emplace_back(b.lo, b.hi);
  return flp::normalize_support(std::move(iv), scene.bin_width_hz());
}

int do_generate(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  double noise_var = 0.0;
  const auto x = make_input(cfg, o, &noise_var);
  flp::write_series(out / "signal.bin", x);
  const auto truth = truth_support(cfg.scene);
  {
    std::ofstream f(out / "truth.json");
    f << flp::support_to_json(truth).dump(2) << "\n";
  }
  flp::write_manifest(out, "generate", json(cfg));
  if (o.check) {
    const auto again = make_input(cfg, o, nullptr);
    check_or_throw(again.samples.size() == x.samples.size(), "generate determinism (length)");
    if (!o.o_snr->count())
      for (std::size_t i = 0; i < x.samples.size(); ++i)
        check_or_throw(again.samples[i] == x.samples[i], "generate determinism (samples)");
    const auto rt = flp::read_series(out / "signal.bin");
    check_or_throw(rt.samples == x.samples && rt.sample_rate_hz == x.sample_rate_hz,
                   "series round-trip");
  }
  std::cout << "generate: " << x.samples.size() << " samples, " << truth.n_detected
            << " bands -> " << out.string() << "\n";
  return 0;
}

int do_sample(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  flp::ComplexTimeSeries x =
      o.in_path.empty() ? make_input(cfg, o, nullptr) : flp::read_series(o.in_path);
  flp::require(static_cast<std::int64_t>(x.samples.size()) == cfg.coset.n_samples,
               "sample: input length must match coset n_samples");
  const auto Y = flp::coset_dft(flp::coset_sample(x, cfg.coset));
  flp::write_matrix(out / "aliased.bin", Y);
  flp::write_manifest(out, "sample", json(cfg));
  if (o.check) {
    const auto oracle = flp::alias_oracle(flp::unitary_dft(x.samples), cfg.coset);
    const double err = (Y.values - oracle.values).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, Y.values.cwiseAbs().maxCoeff());
    check_or_throw(err <= 1e-9 * scale, "aliasing identity");
    const auto rt = flp::read_matrix(out / "aliased.bin");
    check_or_throw((rt.values - Y.values).cwiseAbs().maxCoeff() == 0.0, "matrix round-trip");
  }
  std::cout << "sample: " << Y.config.r << " x " << Y.config.buckets() << " aliased matrix -> "
            << out.string() << "\n";
  return 0;
}

int do_detect(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  flp::AliasedSpectrumMatrix Y;
  if (o.in_path.empty()) {
    const auto x = make_input(cfg, o, nullptr);
    Y = flp::coset_dft(flp::coset_sample(x, cfg.coset));
  } else {
    Y = flp::read_matrix(o.in_path);
    flp::require(Y.config.n_samples == cfg.coset.n_samples && Y.config.alpha == cfg.coset.alpha,
                 "detect: matrix dimensions disagree with config");
  }
  const double bin_width = cfg.scene.bin_width_hz();
  const auto scan = flp::scan_spectrum(Y, cfg.detector);
  const auto support = flp::resolve_boundaries(scan, Y, cfg.detector, bin_width);
  {
    std::ofstream f(out / "support.json");
    f << flp::support_to_json(support, o.rf_offset_hz).dump(2) << "\n";
  }
  flp::write_manifest(out, "detect", json(cfg));
  if (o.check) {
    const std::int64_t m = Y.config.buckets();
    for (const auto& [lo, hi] : support.intervals) {
      check_or_throw(0 <= lo && lo < hi && hi <= cfg.coset.n_samples, "interval in range");
      for (std::int64_t f = lo; f < hi; ++f) {
        const auto [bucket, slot] = flp::bucket_and_slot(f, Y.config);
        const auto& dec = scan.buckets[static_cast<std::size_t>(bucket)].occupied_slots;
        check_or_throw(std::find(dec.begin(), dec.end(), slot) != dec.end(),
                       "support bin backed by an accepted decision");
      }
    }
    check_or_throw(static_cast<int>(support.bands.size()) == support.n_detected,
                   "band count consistency");
    auto renorm = flp::normalize_support(support.intervals, bin_width);
    check_or_throw(renorm.intervals == support.intervals, "normalization idempotence");
    (void)m;
  }
  std::cout << "detect: " << support.n_detected << " band(s)";
  for (const auto& b : support.bands)
    std::cout << "  [" << b.carrier_hz + o.rf_offset_hz << " Hz +/- " << 0.5 * b.bandwidth_hz
              << "]";
  std::cout << " -> " << out.string() << "\n";
  return 0;
}

int do_roc(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  const auto res = flp::run_roc(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : res.points)
    rows.push_back({p.detector, flp::format_double(p.snr_db), flp::format_double(p.p_f_target),
                    flp::format_double(p.p_f_empirical), flp::format_double(p.p_d_empirical),
                    std::to_string(p.flagged_occupied), std::to_string(p.flagged_unoccupied),
                    std::to_string(p.occupied_bins), std::to_string(p.unoccupied_bins)});
  flp::write_csv(out / "roc.csv",
                 {"detector", "snr_db", "p_f_target", "p_f_empirical", "p_d_empirical",
                  "flagged_occupied", "flagged_unoccupied", "occupied_bins", "unoccupied_bins"},
                 rows);
  rows.clear();
  for (const auto& r : res.trial_rows)
    rows.push_back({r.detector, flp::format_double(r.snr_db), flp::format_double(r.p_f_target),
                    std::to_string(r.trial), std::to_string(r.flagged_occupied),
                    std::to_string(r.flagged_unoccupied)});
  flp::write_csv(out / "roc_trials.csv",
                 {"detector", "snr_db", "p_f_target", "trial", "flagged_occupied",
                  "flagged_unoccupied"},
                 rows);
  flp::write_manifest(out, "roc", json(cfg));
  if (o.check)
    for (const auto& p : res.points) {
      check_or_throw(p.p_f_empirical >= 0.0 && p.p_f_empirical <= 1.0, "p_f in [0,1]");
      check_or_throw(p.p_d_empirical >= 0.0 && p.p_d_empirical <= 1.0, "p_d in [0,1]");
    }
  std::cout << "roc: " << res.points.size() << " points over " << cfg.trials << " trials -> "
            << out.string() << "\n";
  return 0;
}

int do_hist(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  const auto res = flp::run_histogram_experiment(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : res.samples)
    rows.push_back({s.mode, std::to_string(s.d), flp::format_double(s.level),
                    std::to_string(s.trial), std::to_string(s.candidate),
                    flp::format_double(s.re), flp::format_double(s.im),
                    flp::format_double(s.abs)});
  flp::write_csv(out / "hist_samples.csv",
                 {"mode", "d", "level", "trial", "candidate", "re", "im", "abs"}, rows);
  rows.clear();
  for (const auto& s : res.summary)
    rows.push_back({s.mode, std::to_string(s.d), flp::format_double(s.level),
                    std::to_string(s.candidate), flp::format_double(s.mean_re),
                    flp::format_double(s.var_re), flp::format_double(s.theory_var_re)});
  flp::write_csv(out / "hist_summary.csv",
                 {"mode", "d", "level", "candidate", "mean_re", "var_re", "theory_var_re"}, rows);
  flp::write_manifest(out, "hist", json(cfg));
  if (o.check)
    for (const auto& s : res.summary)
      check_or_throw(s.var_re >= 0.0, "variance nonnegative");
  std::cout << "hist: " << res.samples.size() << " samples -> " << out.string() << "\n";
  return 0;
}

int do_estimate(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  const auto res = flp::run_estimation(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows)
    rows.push_back({std::to_string(r.trial), flp::format_double(r.snr_db),
                    std::to_string(r.band), flp::format_double(r.true_carrier_hz),
                    flp::format_double(r.est_carrier_hz), flp::format_double(r.true_bandwidth_hz),
                    flp::format_double(r.est_bandwidth_hz), std::to_string(r.n_detected)});
  flp::write_csv(out / "estimation.csv",
                 {"trial", "snr_db", "band", "true_carrier_hz", "est_carrier_hz",
                  "true_bandwidth_hz", "est_bandwidth_hz", "n_detected"},
                 rows);
  flp::write_manifest(out, "estimate", json(cfg));
  if (o.check)
    for (const auto& r : res.rows) check_or_throw(r.n_detected >= 0, "detection count");
  std::cout << "estimate: " << res.rows.size() << " rows -> " << out.string() << "\n";
  return 0;
}

int do_weights(const VerbOpts& o) {
  auto cfg = load_config(o);
  const fs::path out = prepare_out(cfg);
  const auto res = flp::run_weight_profile(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows)
    rows.push_back({std::to_string(r.collisions), std::to_string(r.slot),
                    r.true_root ? "1" : "0", flp::format_double(r.avg_magnitude)});
  flp::write_csv(out / "weights.csv", {"collisions", "slot", "true_root", "avg_magnitude"},
                 rows);
  flp::write_manifest(out, "weights", json(cfg));
  if (o.check)
    for (const auto& r : res.rows)
      check_or_throw(r.avg_magnitude >= 0.0, "magnitudes nonnegative");
  std::cout << "weights: " << res.rows.size() << " rows at " << res.snr_db << " dB -> "
            << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-Nyquist multiband detection via frequency locator polynomials"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<VerbOpts>> store;

  auto* g = app.add_subcommand("generate", "Synthesize a multiband scene to disk");
  auto& go = add_common(g, store);
  auto* sa = app.add_subcommand("sample", "Multi-coset sample a series and store its aliased spectrum");
  auto& sao = add_common(sa, store);
  sa->add_option("--in", sao.in_path, "Input series (from generate); default: synthesize from config");
  auto* de = app.add_subcommand("detect", "Recover occupied support and band parameters");
  auto& deo = add_common(de, store);
  de->add_option("--in", deo.in_path, "Input aliased matrix (from sample); default: full pipeline from config");
  de->add_option("--rf-offset-hz", deo.rf_offset_hz, "Add a downconversion offset to reported carriers");
  auto* ro = app.add_subcommand("roc", "Bin-level ROC sweep for all detectors");
  auto& roo = add_common(ro, store);
  auto* hi = app.add_subcommand("hist", "Candidate-evaluation histograms (noise and signal)");
  auto& hio = add_common(hi, store);
  auto* es = app.add_subcommand("estimate", "Carrier/bandwidth error tables");
  auto& eso = add_common(es, store);
  auto* we = app.add_subcommand("weights", "Per-slot average evaluation magnitudes vs collision count");
  auto& weo = add_common(we, store);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return do_generate(go);
    if (sa->parsed()) return do_sample(sao);
    if (de->parsed()) return do_detect(deo);
    if (ro->parsed()) return do_roc(roo);
    if (hi->parsed()) return do_hist(hio);
    if (es->parsed()) return do_estimate(eso);
    if (we->parsed()) return do_weights(weo);
  } catch (const std::exception& e) {
    std::cerr << "flpsense: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
