#pragma once

// File formats: dataset CSV in and out, curve and metric CSVs, JSON documents,
// and the constraint-spec mini-grammar used by the command line.

#include "calibnet/bounds.hpp"
#include "calibnet/error.hpp"
#include "calibnet/estimators.hpp"
#include "calibnet/evaluation.hpp"
#include "calibnet/model.hpp"
#include "calibnet/simulation.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace calibnet {

inline constexpr std::string_view kVersion = "0.1.0";

namespace io {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::IoError, "cannot write " + tmp.string());
    out << content;
    if (!out) raise(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(ErrorKind::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

/// Parses dataset CSV text: a header of sensor ids with an optional leading
/// `timestamp` column, then numeric rows. LF or CRLF line endings.
inline SensorDataset parse_dataset_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::string_view> lines;
  for (std::string_view rest = text; !rest.empty();) {
    const auto pos = rest.find('\n');
    std::string_view line = rest.substr(0, pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) raise(ErrorKind::ParseError, "empty file, expected a header row");

  const auto header = split(lines.front());
  const bool has_time = !header.empty() && trim(header.front()) == "timestamp";
  const std::size_t first_sensor = has_time ? 1 : 0;
  std::vector<std::string> ids;
  for (std::size_t c = first_sensor; c < header.size(); ++c) {
    const auto id = trim(header[c]);
    if (id.empty()) raise(ErrorKind::ParseError, "line 1, column " + std::to_string(c + 1) + ": empty sensor id");
    ids.emplace_back(id);
  }
  if (ids.size() < 2) raise(ErrorKind::ParseError, "line 1: need at least 2 sensor columns");

  const std::size_t rows = lines.size() - 1;
  if (rows < 2) raise(ErrorKind::TooFewRows, "need at least 2 data rows, found " + std::to_string(rows));
  MatrixXd readings(static_cast<Index>(rows), static_cast<Index>(ids.size()));
  std::vector<double> times;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t line_no = r + 2;
    const auto cells = split(lines[r + 1]);
    if (cells.size() != header.size())
      raise(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + std::to_string(cells.size()) +
                                       " cells, header has " + std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        raise(ErrorKind::NonNumericCell, "line " + std::to_string(line_no) + ", column " +
                                             std::to_string(c + 1) + ": '" + std::string(trim(cells[c])) +
                                             "' is not a finite number");
      if (c < first_sensor)
        times.push_back(*v);
      else
        readings(static_cast<Index>(r), static_cast<Index>(c - first_sensor)) = *v;
    }
  }
  std::optional<std::vector<double>> ts;
  if (has_time) ts = std::move(times);
  return SensorDataset(std::move(readings), std::move(ids), std::move(ts));
}

inline SensorDataset ingest_csv(const std::filesystem::path& path) { return parse_dataset_csv(read_file(path)); }

inline std::string format_matrix_csv(const MatrixXd& values, const std::vector<std::string>& ids,
                                     const std::optional<std::vector<double>>& timestamps) {
  std::string out;
  if (timestamps) out += "timestamp,";
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
  out += '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    if (timestamps) out += format_double((*timestamps)[static_cast<std::size_t>(r)]) + ",";
    for (Index c = 0; c < values.cols(); ++c) out += (c ? "," : "") + format_double(values(r, c));
    out += '\n';
  }
  return out;
}

inline std::string format_dataset_csv(const SensorDataset& data) {
  return format_matrix_csv(data.readings(), data.sensor_ids(), data.timestamps());
}

/// `m,estimator,constraint,rmse,rcrb,rcrb_unconstrained`
inline std::string format_curves_csv(const MonteCarloReport& report) {
  std::string out = "m,estimator,constraint,rmse,rcrb,rcrb_unconstrained\n";
  for (const CurveRow& r : report.rows) {
    out += std::to_string(r.m) + "," + std::string(to_string(r.estimator)) + "," +
           std::string(r.constraint ? to_string(*r.constraint) : "none") + "," + format_double(r.rmse) + "," +
           format_double(r.rcrb) + "," + format_double(r.rcrb_unconstrained) + "\n";
  }
  return out;
}

/// `solution,sensor,mae,mad`
inline std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "solution,sensor,mae,mad\n";
  for (const MetricRow& r : rows)
    out += r.solution + "," + r.sensor + "," + format_double(r.mae) + "," + format_double(r.mad) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Constraint specs: `sum`, `ref:<id>`, `ref:<id>,<alpha>,<beta>`, `refs:<id>,<id>,...`

struct SumSpec {};
struct RefSpec {
  std::string id;
  double alpha = 1.0;
  double beta = 0.0;
};
struct RefsSpec {
  std::vector<std::string> ids;
};
using ConstraintSpec = std::variant<SumSpec, RefSpec, RefsSpec>;

inline ConstraintSpec parse_constraint_spec(std::string_view text) {
  text = trim(text);
  if (text == "sum") return SumSpec{};
  auto fail = [&]() -> ConstraintSpec {
    raise(ErrorKind::ParseError, "bad constraint spec '" + std::string(text) +
                                     "'; expected sum, ref:<id>, ref:<id>,<alpha>,<beta> or refs:<id>,<id>,...");
  };
  if (text.rfind("refs:", 0) == 0) {
    RefsSpec spec;
    for (auto id : split(text.substr(5))) {
      if (trim(id).empty()) return fail();
      spec.ids.emplace_back(trim(id));
    }
    return spec;
  }
  if (text.rfind("ref:", 0) == 0) {
    const auto parts = split(text.substr(4));
    if (trim(parts[0]).empty() || (parts.size() != 1 && parts.size() != 3)) return fail();
    RefSpec spec{std::string(trim(parts[0]))};
    if (parts.size() == 3) {
      const auto a = parse_double(parts[1]);
      const auto b = parse_double(parts[2]);
      if (!a || !b) return fail();
      spec.alpha = *a;
      spec.beta = *b;
    }
    return spec;
  }
  return fail();
}

/// Resolves a sensor id, falling back to a 1-based column number.
inline Index resolve_sensor(std::string_view id, const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<Index>(i);
  Index k = 0;
  const auto res = std::from_chars(id.data(), id.data() + id.size(), k);
  if (res.ec == std::errc() && res.ptr == id.data() + id.size() && k >= 1 && k <= static_cast<Index>(ids.size()))
    return k - 1;
  raise(ErrorKind::UnknownSensorId, "no sensor named '" + std::string(id) + "'");
}

inline ConstraintSet build_constraint(const ConstraintSpec& spec, const std::vector<std::string>& ids) {
  const auto n = static_cast<Index>(ids.size());
  if (std::holds_alternative<SumSpec>(spec)) return sum_constraint(n);
  if (const auto* ref = std::get_if<RefSpec>(&spec))
    return single_reference_constraint(resolve_sensor(ref->id, ids), ref->alpha, ref->beta, n);
  std::vector<Reference> refs;
  for (const auto& id : std::get<RefsSpec>(spec).ids) refs.push_back({resolve_sensor(id, ids), 1.0, 0.0});
  return multi_reference_constraint(refs, n);
}

inline std::string describe(const ConstraintSpec& spec) {
  if (std::holds_alternative<SumSpec>(spec)) return "sum";
  if (const auto* ref = std::get_if<RefSpec>(&spec))
    return "ref:" + ref->id + "," + format_double(ref->alpha) + "," + format_double(ref->beta);
  std::string out = "refs:";
  const auto& ids = std::get<RefsSpec>(spec).ids;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
  return out;
}

// ---------------------------------------------------------------------------
// JSON documents

using nlohmann::json;

inline json params_json(const CalibrationParams& params, const std::vector<std::string>& ids,
                        std::string_view constraint, std::string_view estimator, bool up_to_scale) {
  json sensors = json::array();
  for (Index i = 0; i < params.sensors(); ++i) {
    const double alpha = params.alpha(i);
    const double beta = params.beta(i);
    sensors.push_back({{"id", ids[static_cast<std::size_t>(i)]},
                       {"alpha", alpha},
                       {"beta", beta},
                       {"omega", 1.0 / alpha},
                       {"phi", -beta / alpha + 0.0}});  // + 0.0 folds -0 into 0
  }
  return {{"sensors", sensors},
          {"constraint", constraint},
          {"estimator", estimator},
          {"up_to_scale", up_to_scale}};
}

inline json crb_json(const CrbResult& crb, const std::vector<std::string>& ids) {
  json sigma = json::array();
  for (Index r = 0; r < crb.sigma_theta.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < crb.sigma_theta.cols(); ++c) row.push_back(crb.sigma_theta(r, c));
    sigma.push_back(std::move(row));
  }
  const Eigen::MatrixX2d marg = crb.marginal_std();
  json marginals = json::array();
  for (Index i = 0; i < marg.rows(); ++i)
    marginals.push_back({{"id", ids[static_cast<std::size_t>(i)]}, {"alpha_std", marg(i, 0)}, {"beta_std", marg(i, 1)}});
  return {{"kind", to_string(crb.kind)}, {"rcrb", crb.rcrb}, {"sigma_theta", sigma}, {"marginal_std", marginals}};
}

inline json config_json(const ScenarioConfig& c) {
  return {{"n_sensors", c.n_sensors},
          {"m_samples", c.m_samples},
          {"source_range", {c.source_low, c.source_high}},
          {"gain_mean", c.gain_mean},
          {"gain_std", c.gain_std},
          {"offset_mean", c.offset_mean},
          {"offset_std", c.offset_std},
          {"noise_var_range", {c.noise_var_low, c.noise_var_high}},
          {"noise_var_floor_applied", c.noise_floor_applied()},
          {"n_trials", c.n_trials},
          {"seed", c.seed},
          {"reference_sensor", c.reference_sensor + 1},
          {"center_truth", c.center_truth},
          {"wcls_iterations", c.wcls_iterations}};
}

struct RunManifest {
  explicit RunManifest(std::string cmd, json cfg = json::object(), std::uint64_t run_seed = 0)
      : command(std::move(cmd)), config(std::move(cfg)), seed(run_seed) {}

  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;

  json to_json() const {
    return {{"command", command},
            {"config", config},
            {"seed", seed},
            {"tool_version", kVersion},
            {"inputs", inputs},
            {"outputs", outputs},
            {"duration_seconds", duration_seconds}};
  }
};

}  // namespace io
}  // namespace calibnet
