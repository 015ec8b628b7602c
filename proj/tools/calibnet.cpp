// calibnet command-line front end: simulate, calibrate, bound, evaluate, analog.

#include "calibnet/calibnet.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace calibnet;

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CALIBNET_SEED")) {
    const auto v = io::parse_double(env);
    if (!v || *v < 0 || *v != std::floor(*v))
      raise(ErrorKind::InvalidConfig, std::string("CALIBNET_SEED is not a non-negative integer: ") + env);
    return static_cast<std::uint64_t>(*v);
  }
  return 1;
}

VectorXd parse_list(const std::string& text, const char* what) {
  const auto cells = io::split(text);
  VectorXd out(static_cast<Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto v = io::parse_double(cells[k]);
    if (!v) raise(ErrorKind::ParseError, std::string("bad number in ") + what + ": '" + std::string(cells[k]) + "'");
    out(static_cast<Index>(k)) = *v;
  }
  return out;
}

std::pair<double, double> parse_range(const std::string& text, const char* what) {
  const VectorXd v = parse_list(text, what);
  if (v.size() != 2) raise(ErrorKind::ParseError, std::string(what) + " needs two values: low,high");
  return {v(0), v(1)};
}

void write_manifest(const fs::path& dir, io::RunManifest manifest, Clock::time_point start) {
  manifest.duration_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  io::write_file_atomic(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

void write_json(const fs::path& path, const io::json& doc) { io::write_file_atomic(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct ScenarioFlags {
  Index n_sensors = 10;
  std::string m_grid = "32,128,512,1024";
  std::string source_range = "10,1000";
  double gain_mean = 1.0, gain_std = 0.1;
  double offset_mean = 0.0, offset_std = 10.0;
  std::string noise_range = "0,20";
  Index trials = 1000;
  std::optional<std::uint64_t> seed;
  Index reference = 1;
  bool no_center = false;
  int wcls_iterations = kDefaultWclsIterations;
  unsigned threads = 0;

  void add_to(CLI::App* app, bool grid) {
    app->add_option("--n-sensors", n_sensors, "Number of sensors N")->capture_default_str();
    if (grid) app->add_option("--m-grid", m_grid, "Comma-separated sample counts M")->capture_default_str();
    app->add_option("--source-range", source_range, "Phenomenon ramp low,high")->capture_default_str();
    app->add_option("--gain-mean", gain_mean)->capture_default_str();
    app->add_option("--gain-std", gain_std)->capture_default_str();
    app->add_option("--offset-mean", offset_mean)->capture_default_str();
    app->add_option("--offset-std", offset_std)->capture_default_str();
    app->add_option("--noise-range", noise_range, "Noise variance range low,high; 0,0 is noiseless")
        ->capture_default_str();
    if (grid) app->add_option("--trials", trials, "Monte-Carlo trials per M")->capture_default_str();
    app->add_option("--seed", seed, "Random seed (overrides CALIBNET_SEED)");
    app->add_option("--reference-sensor", reference, "1-based sensor used by the reference constraint")
        ->capture_default_str();
    app->add_flag("--no-center", no_center, "Do not rescale the drawn truth to mean alpha 1, mean beta 0");
    if (grid) {
      app->add_option("--wcls-iterations", wcls_iterations)->capture_default_str();
      app->add_option("--threads", threads, "Worker threads, 0 for hardware concurrency")->capture_default_str();
    }
  }

  ScenarioConfig config() const {
    ScenarioConfig c;
    c.n_sensors = n_sensors;
    c.m_samples.clear();
    for (double m : parse_list(m_grid, "--m-grid")) {
      if (m != std::floor(m)) raise(ErrorKind::InvalidConfig, "M values must be integers");
      c.m_samples.push_back(static_cast<Index>(m));
    }
    std::tie(c.source_low, c.source_high) = parse_range(source_range, "--source-range");
    c.gain_mean = gain_mean;
    c.gain_std = gain_std;
    c.offset_mean = offset_mean;
    c.offset_std = offset_std;
    std::tie(c.noise_var_low, c.noise_var_high) = parse_range(noise_range, "--noise-range");
    c.n_trials = trials;
    c.seed = seed ? *seed : default_seed();
    c.reference_sensor = reference - 1;
    c.center_truth = !no_center;
    c.wcls_iterations = wcls_iterations;
    c.threads = threads;
    c.validate();
    return c;
  }
};

EstimatorKind parse_estimator(std::string_view s) {
  if (s == "cls") return EstimatorKind::Cls;
  if (s == "wcls") return EstimatorKind::Wcls;
  if (s == "blind") return EstimatorKind::Blind;
  raise(ErrorKind::ParseError, "unknown estimator '" + std::string(s) + "'; expected cls, wcls or blind");
}

ConstraintChoice parse_choice(std::string_view s) {
  if (s == "ref") return ConstraintChoice::SingleReference;
  if (s == "sum") return ConstraintChoice::Sum;
  raise(ErrorKind::ParseError, "unknown constraint '" + std::string(s) + "'; expected ref or sum");
}

// ---------------------------------------------------------------------------

int cmd_simulate(const ScenarioFlags& flags, const std::string& estimators, const std::string& constraints,
                 const fs::path& out) {
  const auto start = Clock::now();
  const ScenarioConfig config = flags.config();
  std::vector<EstimatorKind> est;
  for (auto s : io::split(estimators)) est.push_back(parse_estimator(io::trim(s)));
  std::vector<ConstraintChoice> cons;
  for (auto s : io::split(constraints)) cons.push_back(parse_choice(io::trim(s)));

  if (config.noise_floor_applied())
    std::cerr << "note: noise variances drawn from [" << std::max(config.noise_var_low, kNoiseVarFloor) << ", "
              << config.noise_var_high << "] (floor " << kNoiseVarFloor << ")\n";
  const MonteCarloReport report = run_monte_carlo(config, est, cons);
  if (report.failed_trials || report.failed_bounds)
    std::cerr << "note: " << report.failed_trials << " estimator failures and " << report.failed_bounds
              << " bound failures excluded\n";

  io::write_file_atomic(out / "rmse_curves.csv", io::format_curves_csv(report));
  io::RunManifest m{"simulate", io::config_json(config), config.seed};
  m.outputs = {"rmse_curves.csv"};
  m.config["estimators"] = estimators;
  m.config["constraints"] = constraints;
  m.config["failed_trials"] = report.failed_trials;
  m.config["failed_bounds"] = report.failed_bounds;
  write_manifest(out, m, start);
  return 0;
}

int cmd_calibrate(const fs::path& input, const std::string& constraint, const std::string& estimator,
                  const std::string& noise_vars, int iterations, bool write_calibrated, const fs::path& out) {
  const auto start = Clock::now();
  const SensorDataset data = io::ingest_csv(input);
  const EstimatorKind kind = parse_estimator(estimator);
  const GramBlockGrid grams = gram_blocks(data);

  CalibrationParams params = CalibrationParams::from_pairs({{1.0, 0.0}});
  std::string constraint_label = "none";
  if (kind == EstimatorKind::Blind) {
    params = blind_calibrate(grams);
  } else {
    const io::ConstraintSpec spec = io::parse_constraint_spec(constraint);
    constraint_label = io::describe(spec);
    const ConstraintSet cs = io::build_constraint(spec, data.sensor_ids());
    if (kind == EstimatorKind::Cls) {
      params = CalibrationParams(calibrate_cls(grams, cs).theta);
    } else {
      if (noise_vars.empty())
        raise(ErrorKind::MissingNoiseModel, "wcls needs --noise-vars with one variance per sensor");
      params = CalibrationParams(calibrate_wcls(grams, cs, parse_list(noise_vars, "--noise-vars"), iterations).theta);
    }
  }

  const bool up_to_scale = kind == EstimatorKind::Blind;
  write_json(out / "params.json",
             io::params_json(params, data.sensor_ids(), constraint_label, estimator, up_to_scale));
  std::vector<std::string> outputs{"params.json"};
  if (write_calibrated) {
    const CalibratedDataset cal = apply_calibration(data, params, estimator, constraint_label);
    io::write_file_atomic(out / "calibrated.csv", io::format_matrix_csv(cal.values, cal.sensor_ids, data.timestamps()));
    outputs.push_back("calibrated.csv");
  }
  io::json config{{"estimator", estimator}, {"constraint", constraint_label}};
  if (!noise_vars.empty()) config["noise_vars"] = noise_vars;
  if (kind == EstimatorKind::Wcls) config["wcls_iterations"] = iterations;
  io::RunManifest manifest{"calibrate", config};
  manifest.inputs = {input.string()};
  manifest.outputs = outputs;
  write_manifest(out, manifest, start);
  return 0;
}

int cmd_bound(const std::optional<fs::path>& input, const std::string& noise_vars, const ScenarioFlags& flags,
              Index m, Index trial, const std::string& constraint, const fs::path& out) {
  const auto start = Clock::now();
  MatrixXd fim;
  std::vector<std::string> ids;
  io::RunManifest manifest{"bound"};
  std::optional<io::ConstraintSpec> spec;
  if (!constraint.empty()) spec = io::parse_constraint_spec(constraint);

  if (input) {
    if (noise_vars.empty()) raise(ErrorKind::MissingNoiseModel, "bound on a CSV needs --noise-vars");
    const SensorDataset data = io::ingest_csv(*input);
    ids = data.sensor_ids();
    const VectorXd vars = parse_list(noise_vars, "--noise-vars");
    // Alphas for the equation noise come from a WCLS fit under the requested constraint, or sum when none.
    const ConstraintSet fit = spec ? io::build_constraint(*spec, ids) : sum_constraint(data.sensors());
    const VectorXd alphas = CalibrationParams(calibrate_wcls(data, fit, vars).theta).alphas();
    fim = fisher_information_measured(data, vars, alphas);
    manifest.inputs.push_back(input->string());
    manifest.config = {{"noise_vars", noise_vars}, {"fisher_source", "measured"}};
  } else {
    ScenarioFlags single = flags;
    single.m_grid = std::to_string(m);
    single.trials = 1;
    const ScenarioConfig config = single.config();
    const Scenario s = generate_scenario(config, m, trial);
    ids = SensorDataset::default_ids(config.n_sensors);
    fim = fisher_information(s.truth, s.phenomenon);
    manifest.config = io::config_json(config);
    manifest.config["trial"] = trial;
    manifest.config["fisher_source"] = "noiseless truth";
    manifest.seed = config.seed;
  }

  const CrbResult crb = spec ? constrained_crb(fim, io::build_constraint(*spec, ids)) : unconstrained_crb(fim);
  manifest.config["constraint"] = spec ? io::describe(*spec) : "none";
  manifest.outputs = {"crb.json"};
  write_json(out / "crb.json", io::crb_json(crb, ids));
  write_manifest(out, manifest, start);
  return 0;
}

int cmd_evaluate(const fs::path& raw, const std::vector<std::string>& calibrated, const std::string& reference,
                 const fs::path& out) {
  const auto start = Clock::now();
  const SensorDataset data = io::ingest_csv(raw);
  const Index ref = io::resolve_sensor(reference, data.sensor_ids());
  std::vector<LabeledSolution> solutions;
  io::RunManifest manifest{"evaluate"};
  manifest.config = {{"reference", data.sensor_ids()[static_cast<std::size_t>(ref)]}};
  manifest.inputs.push_back(raw.string());
  for (const std::string& item : calibrated) {
    // label=path, or a bare path labelled by its stem
    const auto eq = item.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(item) : fs::path(item.substr(eq + 1));
    const std::string label = eq == std::string::npos ? path.stem().string() : item.substr(0, eq);
    const SensorDataset cal = io::ingest_csv(path);
    if (cal.samples() != data.samples() || cal.sensors() != data.sensors())
      raise(ErrorKind::DimensionMismatch, "'" + path.string() + "' is " + std::to_string(cal.samples()) + "x" +
                                              std::to_string(cal.sensors()) + ", raw data is " +
                                              std::to_string(data.samples()) + "x" + std::to_string(data.sensors()));
    solutions.push_back({label, {cal.readings(), cal.sensor_ids(), {}, {}}});
    manifest.inputs.push_back(path.string());
  }
  io::write_file_atomic(out / "metrics.csv", io::format_metrics_csv(evaluate_against_reference(data, solutions, ref)));
  manifest.outputs = {"metrics.csv"};
  write_manifest(out, manifest, start);
  return 0;
}

int cmd_analog(std::optional<std::uint64_t> seed, const fs::path& out) {
  const auto start = Clock::now();
  const std::uint64_t s = seed ? *seed : 2024;
  io::write_file_atomic(out / "raw.csv", io::format_dataset_csv(office_co2_analog(s).data));
  io::RunManifest manifest{"analog", {{"sensors", 5}, {"samples", 1008}}, s};
  manifest.outputs = {"raw.csv"};
  write_manifest(out, manifest, start);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gain/offset self-calibration for homogeneous sensor networks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  fs::path out = ".";

  auto* sim = app.add_subcommand("simulate", "Monte-Carlo RMSE curves against root-CRB lines");
  ScenarioFlags sim_flags;
  sim_flags.add_to(sim, true);
  std::string sim_est = "cls,wcls", sim_cons = "ref,sum";
  sim->add_option("--estimators", sim_est, "Any of cls,wcls,blind")->capture_default_str();
  sim->add_option("--constraints", sim_cons, "Any of ref,sum")->capture_default_str();
  sim->add_option("-o,--out", out, "Output directory")->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "Estimate per-sensor calibration parameters from a CSV");
  fs::path cal_input;
  std::string cal_constraint = "sum", cal_estimator = "cls", cal_vars;
  int cal_iterations = kDefaultWclsIterations;
  bool cal_write = false;
  cal->add_option("input", cal_input, "Dataset CSV")->required()->check(CLI::ExistingFile);
  cal->add_option("-c,--constraint", cal_constraint,
                  "sum | ref:<id> | ref:<id>,<alpha>,<beta> | refs:<id>,<id>,...; ids may be 1-based numbers")
      ->capture_default_str();
  cal->add_option("-e,--estimator", cal_estimator, "cls | wcls | blind")->capture_default_str();
  cal->add_option("--noise-vars", cal_vars, "Comma-separated noise variances, one per sensor (wcls)");
  cal->add_option("--iterations", cal_iterations, "WCLS reweighting passes")->capture_default_str();
  cal->add_flag("--write-calibrated", cal_write, "Also write calibrated.csv");
  cal->add_option("-o,--out", out, "Output directory")->capture_default_str();

  auto* bnd = app.add_subcommand("bound", "Cramer-Rao bound for a dataset or a synthetic scenario");
  std::optional<fs::path> bnd_input;
  std::string bnd_vars, bnd_constraint;
  Index bnd_m = 1024, bnd_trial = 0;
  ScenarioFlags bnd_flags;
  bnd->add_option("--input", bnd_input, "Dataset CSV; omit to use the scenario flags")->check(CLI::ExistingFile);
  bnd->add_option("--noise-vars", bnd_vars, "Noise variances for --input");
  bnd->add_option("-c,--constraint", bnd_constraint, "Constraint spec; omitted means unconstrained");
  bnd_flags.add_to(bnd, false);
  bnd->add_option("--m", bnd_m, "Samples for the scenario")->capture_default_str();
  bnd->add_option("--trial", bnd_trial, "Scenario trial index")->capture_default_str();
  bnd->add_option("-o,--out", out, "Output directory")->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "MAE and MAD of calibrated datasets against a raw reference sensor");
  fs::path ev_raw;
  std::vector<std::string> ev_cal;
  std::string ev_ref;
  ev->add_option("raw", ev_raw, "Raw dataset CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--calibrated", ev_cal, "label=path or path, repeatable")->required();
  ev->add_option("-r,--reference", ev_ref, "Reference sensor id")->required();
  ev->add_option("-o,--out", out, "Output directory")->capture_default_str();

  auto* an = app.add_subcommand("analog", "Write the synthetic 5-sensor office CO2 week");
  std::optional<std::uint64_t> an_seed;
  an->add_option("--seed", an_seed, "Noise seed (default 2024)");
  an->add_option("-o,--out", out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_flags, sim_est, sim_cons, out);
    if (*cal) return cmd_calibrate(cal_input, cal_constraint, cal_estimator, cal_vars, cal_iterations, cal_write, out);
    if (*bnd) return cmd_bound(bnd_input, bnd_vars, bnd_flags, bnd_m, bnd_trial, bnd_constraint, out);
    if (*ev) return cmd_evaluate(ev_raw, ev_cal, ev_ref, out);
    if (*an) return cmd_analog(an_seed, out);
  } catch (const Error& e) {
    std::cerr << "calibnet: " << e.what() << "\n";
    if (e.kind() == ErrorKind::SingularKkt) std::cerr << "hint: add a constraint or check for constant sensors\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "calibnet: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
