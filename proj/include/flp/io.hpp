#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flp/common.hpp"
#include "flp/detector.hpp"
#include "flp/mcsampler.hpp"
#include "flp/siggen.hpp"

namespace flp {

using json = nlohmann::json;

inline std::string to_string(Modulation m) {
  switch (m) {
    case Modulation::QPSK: return "qpsk";
    case Modulation::FlatComplexGaussian: return "flat_complex_gaussian";
    case Modulation::Tone: return "tone";
  }
  return "?";
}

inline Modulation modulation_from_string(const std::string& s) {
  if (s == "qpsk") return Modulation::QPSK;
  if (s == "flat_complex_gaussian") return Modulation::FlatComplexGaussian;
  if (s == "tone") return Modulation::Tone;
  throw invalid_config("unknown modulation: " + s);
}

inline std::string to_string(PulseShape p) {
  return p == PulseShape::Rect ? "rect" : "root_raised_cosine";
}

inline PulseShape pulse_from_string(const std::string& s) {
  if (s == "rect") return PulseShape::Rect;
  if (s == "root_raised_cosine") return PulseShape::RootRaisedCosine;
  throw invalid_config("unknown pulse_shape: " + s);
}

inline std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::Uncentered ? "uncentered" : "null_calibrated";
}

inline ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "uncentered") return ThresholdMode::Uncentered;
  if (s == "null_calibrated") return ThresholdMode::NullCalibrated;
  throw invalid_config("unknown threshold_mode: " + s);
}

inline std::string to_string(SolverKind s) { return s == SolverKind::LS ? "ls" : "tls"; }

inline SolverKind solver_from_string(const std::string& s) {
  if (s == "ls") return SolverKind::LS;
  if (s == "tls") return SolverKind::TLS;
  throw invalid_config("unknown solver: " + s);
}

inline void to_json(json& j, const SubbandSpec& sb) {
  j = json{{"carrier_hz", sb.carrier_hz},
           {"bandwidth_hz", sb.bandwidth_hz},
           {"modulation", to_string(sb.modulation)},
           {"power", sb.power},
           {"pulse_shape", to_string(sb.pulse_shape)},
           {"rrc_rolloff", sb.rrc_rolloff}};
}

inline void from_json(const json& j, SubbandSpec& sb) {
  sb.carrier_hz = j.at("carrier_hz").get<double>();
  sb.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  sb.modulation = modulation_from_string(j.at("modulation").get<std::string>());
  sb.power = j.value("power", 1.0);
  sb.pulse_shape = pulse_from_string(j.value("pulse_shape", std::string("rect")));
  sb.rrc_rolloff = j.value("rrc_rolloff", 0.25);
}

inline void to_json(json& j, const MultibandSpec& spec) {
  j = json{{"subbands", spec.subbands},
           {"f_nyq_hz", spec.f_nyq_hz},
           {"n_samples", spec.n_samples},
           {"max_subbands", spec.max_subbands},
           {"b_max_hz", spec.b_max_hz}};
}

inline void from_json(const json& j, MultibandSpec& spec) {
  spec.subbands = j.at("subbands").get<std::vector<SubbandSpec>>();
  spec.f_nyq_hz = j.at("f_nyq_hz").get<double>();
  spec.n_samples = j.at("n_samples").get<std::int64_t>();
  spec.max_subbands = j.at("max_subbands").get<int>();
  spec.b_max_hz = j.at("b_max_hz").get<double>();
}

inline void to_json(json& j, const CosetConfig& cfg) {
  j = json{{"n_samples", cfg.n_samples},
           {"alpha", cfg.alpha},
           {"r", cfg.r},
           {"shift_step", cfg.shift_step}};
}

inline void from_json(const json& j, CosetConfig& cfg) {
  cfg.n_samples = j.at("n_samples").get<std::int64_t>();
  cfg.alpha = j.at("alpha").get<int>();
  cfg.r = j.at("r").get<int>();
  cfg.shift_step = j.value("shift_step", 1);
}

inline void to_json(json& j, const DetectorConfig& cfg) {
  j = json{{"p_f", cfg.p_f},
           {"d", cfg.d},
           {"n_s", cfg.n_s},
           {"threshold_mode", to_string(cfg.threshold_mode)},
           {"stride", cfg.stride},
           {"solver", to_string(cfg.solver)},
           {"worst_case_filter", cfg.worst_case_filter},
           {"refine_boundaries", cfg.refine_boundaries},
           {"trim_trailing", cfg.trim_trailing},
           {"kappa", cfg.kappa}};
}

inline void from_json(const json& j, DetectorConfig& cfg) {
  cfg.p_f = j.value("p_f", 0.01);
  cfg.d = j.at("d").get<std::int64_t>();
  cfg.n_s = j.at("n_s").get<int>();
  cfg.threshold_mode =
      threshold_mode_from_string(j.value("threshold_mode", std::string("null_calibrated")));
  cfg.stride = j.value("stride", static_cast<std::int64_t>(0));
  cfg.solver = solver_from_string(j.value("solver", std::string("ls")));
  cfg.worst_case_filter = j.value("worst_case_filter", false);
  cfg.refine_boundaries = j.value("refine_boundaries", true);
  cfg.trim_trailing = j.value("trim_trailing", false);
  cfg.kappa = j.value("kappa", 2.0);
}

inline void to_json(json& j, const Band& b) {
  j = json{{"carrier_hz", b.carrier_hz}, {"bandwidth_hz", b.bandwidth_hz}};
}

inline void from_json(const json& j, Band& b) {
  b.carrier_hz = j.at("carrier_hz").get<double>();
  b.bandwidth_hz = j.at("bandwidth_hz").get<double>();
}

// rf_offset_hz shifts reported carriers when the record was mixed down from
// a non-zero RF reference; the bin intervals stay at baseband.
inline json support_to_json(const SupportEstimate& est, double rf_offset_hz = 0.0) {
  json j;
  j["intervals"] = json::array();
  for (const auto& [lo, hi] : est.intervals) j["intervals"].push_back({lo, hi});
  j["bands"] = json::array();
  for (const auto& b : est.bands)
    j["bands"].push_back(
        json{{"carrier_hz", b.carrier_hz + rf_offset_hz}, {"bandwidth_hz", b.bandwidth_hz}});
  j["n_detected"] = est.n_detected;
  if (rf_offset_hz != 0.0) j["rf_offset_hz"] = rf_offset_hz;
  return j;
}

inline SupportEstimate support_from_json(const json& j) {
  SupportEstimate est;
  for (const auto& iv : j.at("intervals"))
    est.intervals.emplace_back(iv.at(0).get<std::int64_t>(), iv.at(1).get<std::int64_t>());
  est.bands = j.value("bands", std::vector<Band>{});
  est.n_detected = j.at("n_detected").get<int>();
  return est;
}

namespace detail {

inline void write_doubles(std::ofstream& f, const double* data, std::size_t count) {
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

}  // namespace detail

// Interleaved little-endian float64 I/Q, one complex sample per pair, with a
// JSON sidecar <path>.json describing rate and length.
inline void write_series(const std::filesystem::path& path, const ComplexTimeSeries& x) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_series: cannot open " + path.string());
  static_assert(sizeof(cplx) == 2 * sizeof(double));
  detail::write_doubles(f, reinterpret_cast<const double*>(x.samples.data()),
                        2 * x.samples.size());
  require(f.good(), "write_series: write failed for " + path.string());
  json side{{"sample_rate_hz", x.sample_rate_hz},
            {"length", static_cast<std::int64_t>(x.samples.size())},
            {"format", "complex_float64_interleaved_le"}};
  std::ofstream sf(path.string() + ".json");
  sf << side.dump(2) << "\n";
}

inline ComplexTimeSeries read_series(const std::filesystem::path& path) {
  std::ifstream sf(path.string() + ".json");
  require(sf.good(), "read_series: missing sidecar for " + path.string());
  json side = json::parse(sf);
  ComplexTimeSeries x;
  x.sample_rate_hz = side.at("sample_rate_hz").get<double>();
  const auto n = side.at("length").get<std::int64_t>();
  x.samples.resize(static_cast<std::size_t>(n));
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read_series: cannot open " + path.string());
  f.read(reinterpret_cast<char*>(x.samples.data()),
         static_cast<std::streamsize>(x.samples.size() * sizeof(cplx)));
  require(f.good(), "read_series: truncated " + path.string());
  return x;
}

// Row-major interleaved I/Q (stream-major), sidecar carries the grid and the
// per-stream unitary normalization tag.
inline void write_matrix(const std::filesystem::path& path, const AliasedSpectrumMatrix& Y) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_matrix: cannot open " + path.string());
  const std::int64_t m = Y.config.buckets();
  std::vector<double> row(static_cast<std::size_t>(2 * m));
  for (int s = 0; s < Y.config.r; ++s) {
    for (std::int64_t k = 0; k < m; ++k) {
      row[static_cast<std::size_t>(2 * k)] = Y.values(s, k).real();
      row[static_cast<std::size_t>(2 * k + 1)] = Y.values(s, k).imag();
    }
    detail::write_doubles(f, row.data(), row.size());
  }
  require(f.good(), "write_matrix: write failed for " + path.string());
  json side{{"alpha", Y.config.alpha},
            {"r", Y.config.r},
            {"c", Y.config.shift_step},
            {"N", Y.config.n_samples},
            {"normalization", "unitary_per_stream"},
            {"format", "complex_float64_row_major_interleaved_le"}};
  std::ofstream sf(path.string() + ".json");
  sf << side.dump(2) << "\n";
}

inline AliasedSpectrumMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream sf(path.string() + ".json");
  require(sf.good(), "read_matrix: missing sidecar for " + path.string());
  json side = json::parse(sf);
  AliasedSpectrumMatrix Y;
  Y.config.alpha = side.at("alpha").get<int>();
  Y.config.r = side.at("r").get<int>();
  Y.config.shift_step = side.at("c").get<int>();
  Y.config.n_samples = side.at("N").get<std::int64_t>();
  Y.config.validate();
  require(side.value("normalization", std::string()) == "unitary_per_stream",
          "read_matrix: unsupported normalization");
  const std::int64_t m = Y.config.buckets();
  Y.values.resize(Y.config.r, m);
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read_matrix: cannot open " + path.string());
  std::vector<double> row(static_cast<std::size_t>(2 * m));
  for (int s = 0; s < Y.config.r; ++s) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(double)));
    require(f.good(), "read_matrix: truncated " + path.string());
    for (std::int64_t k = 0; k < m; ++k)
      Y.values(s, k) = {row[static_cast<std::size_t>(2 * k)],
                        row[static_cast<std::size_t>(2 * k + 1)]};
  }
  return Y;
}

}  // namespace flp
