#pragma once

// Synthetic co-located sensor scenarios and the Monte-Carlo RMSE study.
//
// Each trial draws per-sensor gains, offsets and noise variances once; the noise
// realization additionally depends on M so that a sweep over M reuses the same
// sensors. Every random stream is derived from (seed, trial[, M]), never from
// execution order, so results do not depend on the thread schedule.

#include "calibnet/bounds.hpp"
#include "calibnet/error.hpp"
#include "calibnet/estimators.hpp"
#include "calibnet/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace calibnet {

/// Lower clamp applied to sampled noise variances so whitening stays defined.
inline constexpr double kNoiseVarFloor = 1e-3;

struct ScenarioConfig {
  Index n_sensors = 10;
  std::vector<Index> m_samples{32, 128, 512, 1024};
  double source_low = 10.0;
  double source_high = 1000.0;
  double gain_mean = 1.0;
  double gain_std = 0.1;
  double offset_mean = 0.0;
  double offset_std = 10.0;
  double noise_var_low = 0.0;
  double noise_var_high = 20.0;
  Index n_trials = 1000;
  std::uint64_t seed = 1;
  /// Zero-based index of the sensor used by single-reference constraints.
  Index reference_sensor = 0;
  /// Rescale each trial's drawn sensors along the affine ambiguity so the mean
  /// inverse parameters are exactly (1, 0).
  bool center_truth = true;
  int wcls_iterations = kDefaultWclsIterations;
  /// Worker threads for trials; 0 picks the hardware concurrency.
  unsigned threads = 0;

  bool noiseless() const noexcept { return noise_var_high <= 0.0; }

  void validate() const {
    if (n_sensors < 2) raise(ErrorKind::InvalidConfig, "n_sensors must be >= 2");
    if (m_samples.empty()) raise(ErrorKind::InvalidConfig, "M grid is empty");
    for (Index m : m_samples)
      if (m < 2) raise(ErrorKind::InvalidConfig, "every M must be >= 2");
    if (!(source_high > source_low)) raise(ErrorKind::InvalidConfig, "source range must be increasing");
    if (noise_var_low < 0.0 || noise_var_high < noise_var_low)
      raise(ErrorKind::InvalidConfig, "noise variance range must satisfy 0 <= low <= high");
    if (gain_std < 0.0 || offset_std < 0.0) raise(ErrorKind::InvalidConfig, "spreads must be >= 0");
    if (n_trials < 1) raise(ErrorKind::InvalidConfig, "n_trials must be >= 1");
    if (reference_sensor < 0 || reference_sensor >= n_sensors)
      raise(ErrorKind::InvalidConfig, "reference sensor out of range");
    if (wcls_iterations < 1) raise(ErrorKind::InvalidConfig, "wcls_iterations must be >= 1");
  }

  /// Whether sampled variances are clamped from below by kNoiseVarFloor.
  bool noise_floor_applied() const noexcept { return !noiseless() && noise_var_low < kNoiseVarFloor; }
};

struct Scenario {
  VectorXd phenomenon;
  ForwardSensorModel truth;
  SensorDataset data;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t m, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32),
                    static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32), tag};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Per-trial sensor truth, independent of M.
inline ForwardSensorModel draw_truth(const ScenarioConfig& config, Index trial) {
  const Index n = config.n_sensors;
  auto rng = detail::stream(config.seed, static_cast<std::uint64_t>(trial), 0, 0x7472u);
  std::normal_distribution<double> gain(config.gain_mean, config.gain_std);
  std::normal_distribution<double> offset(config.offset_mean, config.offset_std);
  const double var_low = std::max(config.noise_var_low, kNoiseVarFloor);
  const double var_high = std::max(config.noise_var_high, var_low);
  std::uniform_real_distribution<double> var(var_low, var_high);

  ForwardSensorModel model{VectorXd(n), VectorXd(n), VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    model.gains(i) = config.gain_std > 0.0 ? gain(rng) : config.gain_mean;
    model.offsets(i) = config.offset_std > 0.0 ? offset(rng) : config.offset_mean;
    model.noise_vars(i) = config.noiseless() ? 0.0 : var(rng);
  }
  model.validate();

  if (config.center_truth) {
    CalibrationParams inv = to_inverse_params(model);
    const double a = static_cast<double>(n) / inv.alphas().sum();
    const double b = -a * inv.betas().sum() / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
      const double alpha = a * inv.alpha(i);
      const double beta = a * inv.beta(i) + b;
      model.gains(i) = 1.0 / alpha;
      model.offsets(i) = -beta / alpha;
    }
  }
  return model;
}

/// Linear ramp from source_low to source_high over m points.
inline VectorXd ramp_phenomenon(const ScenarioConfig& config, Index m) {
  return VectorXd::LinSpaced(m, config.source_low, config.source_high);
}

inline Scenario generate_scenario(const ScenarioConfig& config, Index m, Index trial) {
  config.validate();
  if (m < 2) raise(ErrorKind::InvalidConfig, "M must be >= 2");
  ForwardSensorModel truth = draw_truth(config, trial);
  VectorXd x = ramp_phenomenon(config, m);
  auto rng = detail::stream(config.seed, static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(m),
                            0x6e6fu);
  std::normal_distribution<double> unit(0.0, 1.0);
  MatrixXd readings(m, config.n_sensors);
  for (Index i = 0; i < config.n_sensors; ++i) {
    const double sd = std::sqrt(truth.noise_vars(i));
    for (Index k = 0; k < m; ++k) {
      const double noise = sd > 0.0 ? sd * unit(rng) : 0.0;
      readings(k, i) = truth.gains(i) * x(k) + truth.offsets(i) + noise;
    }
  }
  return Scenario{std::move(x), std::move(truth), SensorDataset(std::move(readings))};
}

inline double rmse(const std::vector<VectorXd>& estimates, const std::vector<VectorXd>& truths) {
  if (estimates.empty()) raise(ErrorKind::EmptyInput, "no estimates");
  if (estimates.size() != truths.size())
    raise(ErrorKind::DimensionMismatch, "estimate and truth counts differ");
  double total = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].size() != truths[k].size())
      raise(ErrorKind::DimensionMismatch, "estimate length does not match truth");
    total += (estimates[k] - truths[k]).squaredNorm();
  }
  return std::sqrt(total / static_cast<double>(estimates.size()));
}

/// sqrt(mean_n ||theta_hat(n) - theta||^2).
inline double rmse(const std::vector<VectorXd>& estimates, const VectorXd& truth) {
  return rmse(estimates, std::vector<VectorXd>(estimates.size(), truth));
}

enum class EstimatorKind { Cls, Wcls, Blind };
enum class ConstraintChoice { SingleReference, Sum };

inline std::string_view to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::Cls: return "cls";
    case EstimatorKind::Wcls: return "wcls";
    case EstimatorKind::Blind: return "blind";
  }
  return "cls";
}

inline std::string_view to_string(ConstraintChoice c) {
  return c == ConstraintChoice::Sum ? "sum" : "ref";
}

/// Scale a and shift b minimizing ||a*estimate + b*shift - truth||, applied to
/// the estimate. Used to score estimators that only resolve the affine family.
inline VectorXd align_to_truth(const VectorXd& estimate, const VectorXd& truth) {
  const Index n = estimate.size() / 2;
  Eigen::MatrixX2d basis(estimate.size(), 2);
  basis.col(0) = estimate;
  basis.col(1) = offset_shift_direction(n);
  const Eigen::Vector2d coef = basis.colPivHouseholderQr().solve(truth);
  return basis * coef;
}

inline ConstraintSet make_constraint(ConstraintChoice choice, const CalibrationParams& truth,
                                     Index reference_sensor) {
  const Index n = truth.sensors();
  if (choice == ConstraintChoice::Sum) return sum_constraint(n);
  return single_reference_constraint(reference_sensor, truth.alpha(reference_sensor),
                                     truth.beta(reference_sensor), n);
}

/// Per-trial errors for one (estimator, constraint) cell. Blind cells carry no
/// constraint and are scored after oracle alignment.
struct McCell {
  EstimatorKind estimator;
  std::optional<ConstraintChoice> constraint;
  std::vector<std::optional<VectorXd>> errors;
};

struct McGridPoint {
  Index m = 0;
  std::vector<McCell> cells;
  /// Per constraint choice: per-trial trace of the constrained bound.
  std::vector<std::pair<ConstraintChoice, std::vector<std::optional<double>>>> bound_traces;
  std::vector<std::optional<double>> unconstrained_traces;
};

/// Runs all trials at one M. The returned vectors are indexed by trial.
inline McGridPoint run_grid_point(const ScenarioConfig& config, Index m,
                                  const std::vector<EstimatorKind>& estimators,
                                  const std::vector<ConstraintChoice>& constraints) {
  config.validate();
  const auto trials = static_cast<std::size_t>(config.n_trials);
  McGridPoint point;
  point.m = m;
  for (EstimatorKind e : estimators) {
    if (e == EstimatorKind::Blind) {
      point.cells.push_back({e, std::nullopt, std::vector<std::optional<VectorXd>>(trials)});
    } else {
      for (ConstraintChoice c : constraints)
        point.cells.push_back({e, c, std::vector<std::optional<VectorXd>>(trials)});
    }
  }
  for (ConstraintChoice c : constraints) point.bound_traces.push_back({c, std::vector<std::optional<double>>(trials)});
  point.unconstrained_traces.assign(trials, std::nullopt);

  auto run_trial = [&](std::size_t t) {
    const Scenario s = generate_scenario(config, m, static_cast<Index>(t));
    const CalibrationParams truth = to_inverse_params(s.truth);
    const GramBlockGrid grams = gram_blocks(s.data);
    const VectorXd weight_vars =
        config.noiseless() ? VectorXd::Ones(config.n_sensors) : s.truth.noise_vars;

    for (McCell& cell : point.cells) {
      try {
        if (cell.estimator == EstimatorKind::Blind) {
          const VectorXd est = blind_calibrate(grams).theta();
          cell.errors[t] = align_to_truth(est, truth.theta()) - truth.theta();
          continue;
        }
        const ConstraintSet cs = make_constraint(*cell.constraint, truth, config.reference_sensor);
        const KktSolution sol = cell.estimator == EstimatorKind::Cls
                                    ? calibrate_cls(grams, cs)
                                    : calibrate_wcls(grams, cs, weight_vars, config.wcls_iterations);
        cell.errors[t] = sol.theta - truth.theta();
      } catch (const Error&) {
        cell.errors[t] = std::nullopt;
      }
    }

    if (config.noiseless()) {
      for (auto& [c, traces] : point.bound_traces) traces[t] = 0.0;
      point.unconstrained_traces[t] = 0.0;
      return;
    }
    try {
      const MatrixXd fim = fisher_information(s.truth, s.phenomenon);
      for (auto& [c, traces] : point.bound_traces) {
        try {
          traces[t] = constrained_crb(fim, make_constraint(c, truth, config.reference_sensor)).sigma_theta.trace();
        } catch (const Error&) {
        }
      }
      point.unconstrained_traces[t] = unconstrained_crb(fim).sigma_theta.trace();
    } catch (const Error&) {
    }
  };

  unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, trials));
  if (workers <= 1) {
    for (std::size_t t = 0; t < trials; ++t) run_trial(t);
  } else {
    // Each worker owns a strided subset of trial slots; slots never overlap.
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < trials; t += workers) run_trial(t);
      });
  }
  return point;
}

struct CurveRow {
  Index m = 0;
  EstimatorKind estimator = EstimatorKind::Cls;
  /// Empty for the blind estimator, which is scored oracle-aligned.
  std::optional<ConstraintChoice> constraint;
  double rmse = 0.0;
  double rcrb = 0.0;
  double rcrb_unconstrained = 0.0;
  Index trials_used = 0;
  Index failures = 0;
};

struct MonteCarloReport {
  ScenarioConfig config;
  std::vector<CurveRow> rows;
  Index failed_trials = 0;
  Index failed_bounds = 0;

  const CurveRow* find(Index m, EstimatorKind e, std::optional<ConstraintChoice> c) const {
    for (const CurveRow& r : rows)
      if (r.m == m && r.estimator == e && r.constraint == c) return &r;
    return nullptr;
  }
};

namespace detail {

inline std::pair<double, Index> root_mean_trace(const std::vector<std::optional<double>>& traces) {
  double sum = 0.0;
  Index used = 0;
  for (const auto& t : traces)
    if (t) {
      sum += *t;
      ++used;
    }
  return {used ? std::sqrt(sum / static_cast<double>(used)) : std::nan(""), used};
}

}  // namespace detail

/// RMSE-vs-M curves with matching root-CRB lines. The bound at each M is
/// sqrt(trace(mean over trials of Sigma_theta)).
inline MonteCarloReport run_monte_carlo(const ScenarioConfig& config,
                                        const std::vector<EstimatorKind>& estimators,
                                        const std::vector<ConstraintChoice>& constraints) {
  config.validate();
  if (estimators.empty()) raise(ErrorKind::InvalidConfig, "no estimators requested");
  const bool needs_constraint = std::any_of(estimators.begin(), estimators.end(),
                                            [](EstimatorKind e) { return e != EstimatorKind::Blind; });
  if (needs_constraint && constraints.empty()) raise(ErrorKind::InvalidConfig, "no constraints requested");

  MonteCarloReport report;
  report.config = config;
  for (Index m : config.m_samples) {
    const McGridPoint point = run_grid_point(config, m, estimators, constraints);
    const auto [rcrb_free, free_used] = detail::root_mean_trace(point.unconstrained_traces);
    report.failed_bounds += config.n_trials - free_used;
    for (const McCell& cell : point.cells) {
      CurveRow row;
      row.m = m;
      row.estimator = cell.estimator;
      row.constraint = cell.constraint;
      row.rcrb_unconstrained = rcrb_free;
      row.rcrb = rcrb_free;
      if (cell.constraint) {
        for (const auto& [c, traces] : point.bound_traces)
          if (c == *cell.constraint) {
            const auto [r, used] = detail::root_mean_trace(traces);
            row.rcrb = r;
          }
      }
      double total = 0.0;
      for (const auto& err : cell.errors) {
        if (err) {
          total += err->squaredNorm();
          ++row.trials_used;
        } else {
          ++row.failures;
        }
      }
      row.rmse = row.trials_used ? std::sqrt(total / static_cast<double>(row.trials_used)) : std::nan("");
      report.failed_trials += row.failures;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace calibnet
