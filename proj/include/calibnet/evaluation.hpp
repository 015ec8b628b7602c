#pragma once

// Applying calibrations and scoring them against a reference sensor.

#include "calibnet/error.hpp"
#include "calibnet/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace calibnet {

struct CalibratedDataset {
  MatrixXd values;
  std::vector<std::string> sensor_ids;
  std::string estimator;
  std::string constraint;
};

/// Column i becomes alpha_i * y_i + beta_i.
inline CalibratedDataset apply_calibration(const SensorDataset& data, const CalibrationParams& params,
                                           std::string estimator = {}, std::string constraint = {}) {
  if (params.sensors() != data.sensors())
    raise(ErrorKind::DimensionMismatch, "parameter count " + std::to_string(params.sensors()) +
                                            " does not match sensor count " + std::to_string(data.sensors()));
  MatrixXd out(data.samples(), data.sensors());
  for (Index i = 0; i < data.sensors(); ++i)
    out.col(i) = params.alpha(i) * data.readings().col(i).array() + params.beta(i);
  return {std::move(out), data.sensor_ids(), std::move(estimator), std::move(constraint)};
}

namespace detail {

inline Eigen::ArrayXd abs_error(const VectorXd& candidate, const VectorXd& reference) {
  if (candidate.size() != reference.size())
    raise(ErrorKind::DimensionMismatch, "candidate and reference lengths differ");
  if (candidate.size() == 0) raise(ErrorKind::EmptyInput, "empty series");
  return (candidate - reference).array().abs();
}

}  // namespace detail

/// Mean of |candidate - reference|.
inline double mae(const VectorXd& candidate, const VectorXd& reference) {
  return detail::abs_error(candidate, reference).mean();
}

/// Mean absolute deviation of gamma = |candidate - reference| about its mean.
/// Insensitive to a constant offset as long as the error keeps its sign.
inline double mad(const VectorXd& candidate, const VectorXd& reference) {
  const Eigen::ArrayXd gamma = detail::abs_error(candidate, reference);
  return (gamma - gamma.mean()).abs().mean();
}

struct MetricRow {
  std::string solution;
  std::string sensor;
  double mae = 0.0;
  double mad = 0.0;
};

struct LabeledSolution {
  std::string label;
  CalibratedDataset calibrated;
};

/// MAE and MAD of every calibrated column against the raw reference column.
inline std::vector<MetricRow> evaluate_against_reference(const SensorDataset& data,
                                                         const std::vector<LabeledSolution>& solutions,
                                                         Index ref_sensor) {
  if (ref_sensor < 0 || ref_sensor >= data.sensors())
    raise(ErrorKind::IndexOutOfRange, "reference sensor " + std::to_string(ref_sensor) + " out of range");
  if (solutions.empty()) raise(ErrorKind::EmptyInput, "no solutions to evaluate");
  const VectorXd reference = data.readings().col(ref_sensor);
  std::vector<MetricRow> rows;
  for (const LabeledSolution& s : solutions) {
    const MatrixXd& values = s.calibrated.values;
    if (values.rows() != data.samples())
      raise(ErrorKind::DimensionMismatch, "solution '" + s.label + "' has " + std::to_string(values.rows()) +
                                              " rows, raw data has " + std::to_string(data.samples()));
    for (Index i = 0; i < values.cols(); ++i) {
      const VectorXd column = values.col(i);
      const std::string id = i < static_cast<Index>(s.calibrated.sensor_ids.size())
                                 ? s.calibrated.sensor_ids[static_cast<std::size_t>(i)]
                                 : "s" + std::to_string(i + 1);
      rows.push_back({s.label, id, mae(column, reference), mad(column, reference)});
    }
  }
  return rows;
}

/// Synthetic office CO2 week: five co-located sensors sampling a weekday
/// occupancy square wave on a 410 ppm baseline, 10-minute sampling. s2 is
/// ideal; s4 reads about 1000 ppm at baseline.
struct OfficeAnalog {
  SensorDataset data;
  ForwardSensorModel truth;
  VectorXd phenomenon;
};

inline OfficeAnalog office_co2_analog(std::uint64_t seed = 2024) {
  constexpr Index kSamplesPerDay = 144;
  constexpr Index kDays = 7;
  constexpr Index m = kSamplesPerDay * kDays;
  constexpr double kBaseline = 410.0;
  constexpr double kOccupied = 480.0;

  VectorXd x(m);
  std::vector<double> timestamps(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) {
    const Index day = k / kSamplesPerDay;
    const Index slot = k % kSamplesPerDay;
    const bool weekday = day < 5;
    const bool office_hours = slot >= 8 * 6 && slot < 18 * 6;  // 08:00 to 18:00
    x(k) = kBaseline + ((weekday && office_hours) ? kOccupied : 0.0);
    timestamps[static_cast<std::size_t>(k)] = static_cast<double>(k * 600);
  }

  ForwardSensorModel truth{VectorXd(5), VectorXd(5), VectorXd(5)};
  truth.gains << 1.03, 1.0, 0.97, 1.12, 1.02;
  truth.offsets << -12.0, 0.0, 8.0, 540.0, -15.0;
  truth.noise_vars << 64.0, 36.0, 81.0, 100.0, 49.0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  MatrixXd readings(m, 5);
  for (Index i = 0; i < 5; ++i) {
    const double sd = std::sqrt(truth.noise_vars(i));
    for (Index k = 0; k < m; ++k)
      readings(k, i) = truth.gains(i) * x(k) + truth.offsets(i) + sd * unit(rng);
  }
  return {SensorDataset(std::move(readings), {"s1", "s2", "s3", "s4", "s5"}, std::move(timestamps)),
          std::move(truth), std::move(x)};
}

}  // namespace calibnet
