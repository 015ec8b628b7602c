#pragma once

// Measurement model, parameter mappings and the structured assembly of the
// quadratic-form matrix G.
//
// Sensor i reports y_i = omega_i * x + phi_i + noise. Calibration inverts this
// with x ~ alpha_i * y_i + beta_i, alpha_i = 1/omega_i, beta_i = -phi_i/omega_i.
// The parameter vector theta is interleaved: [alpha_1, beta_1, ..., alpha_N, beta_N].
//
// Co-located sensors observe the same phenomenon, so the centered disagreement
// (P kron I_M) * x vanishes, where P = N*I - 1*1^T. Every matrix of the form
// V^T (P kron I)^T (A kron I) (P kron I) V collapses to an N x N weight matrix
// Omega = P*A*P acting on the 2x2 Gram blocks V_i^T V_j, which is how G (and the
// Fisher information) is assembled here. Nothing of size NM x NM is ever formed.

#include "calibnet/error.hpp"
#include "calibnet/linalg.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace calibnet {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raw readings: M rows (time samples) by N columns (sensors).
class SensorDataset {
 public:
  SensorDataset(MatrixXd readings, std::vector<std::string> sensor_ids,
                std::optional<std::vector<double>> timestamps = std::nullopt)
      : readings_(std::move(readings)),
        sensor_ids_(std::move(sensor_ids)),
        timestamps_(std::move(timestamps)) {
    if (readings_.rows() < 2)
      raise(ErrorKind::TooFewRows, "a dataset needs at least 2 samples, got " +
                                       std::to_string(readings_.rows()));
    if (readings_.cols() < 2)
      raise(ErrorKind::InvalidSize, "a dataset needs at least 2 sensors, got " +
                                        std::to_string(readings_.cols()));
    if (static_cast<Index>(sensor_ids_.size()) != readings_.cols())
      raise(ErrorKind::DimensionMismatch, "sensor id count does not match column count");
    if (timestamps_ && static_cast<Index>(timestamps_->size()) != readings_.rows())
      raise(ErrorKind::DimensionMismatch, "timestamp count does not match row count");
    if (!readings_.allFinite()) raise(ErrorKind::NonNumericCell, "readings must be finite");
  }

  /// Convenience constructor naming sensors s1..sN.
  explicit SensorDataset(MatrixXd readings)
      : SensorDataset(readings, default_ids(readings.cols())) {}

  const MatrixXd& readings() const noexcept { return readings_; }
  const std::vector<std::string>& sensor_ids() const noexcept { return sensor_ids_; }
  const std::optional<std::vector<double>>& timestamps() const noexcept { return timestamps_; }
  Index samples() const noexcept { return readings_.rows(); }
  Index sensors() const noexcept { return readings_.cols(); }

  static std::vector<std::string> default_ids(Index n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i + 1));
    return ids;
  }

 private:
  MatrixXd readings_;
  std::vector<std::string> sensor_ids_;
  std::optional<std::vector<double>> timestamps_;
};

/// Per-sensor inverse-model pairs stored as the interleaved vector theta.
class CalibrationParams {
 public:
  explicit CalibrationParams(VectorXd theta) : theta_(std::move(theta)) {
    if (theta_.size() == 0 || theta_.size() % 2 != 0)
      raise(ErrorKind::InvalidSize, "theta must have even, nonzero length");
    if (!theta_.allFinite()) raise(ErrorKind::DegenerateGain, "parameters must be finite");
    for (Index i = 0; i < sensors(); ++i)
      if (alpha(i) == 0.0)
        raise(ErrorKind::DegenerateGain, "alpha of sensor " + std::to_string(i) + " is zero");
  }

  static CalibrationParams from_pairs(const std::vector<std::pair<double, double>>& pairs) {
    VectorXd theta(2 * static_cast<Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      theta(2 * static_cast<Index>(i)) = pairs[i].first;
      theta(2 * static_cast<Index>(i) + 1) = pairs[i].second;
    }
    return CalibrationParams(std::move(theta));
  }

  Index sensors() const noexcept { return theta_.size() / 2; }
  double alpha(Index i) const { return theta_(2 * i); }
  double beta(Index i) const { return theta_(2 * i + 1); }
  const VectorXd& theta() const noexcept { return theta_; }

  VectorXd alphas() const {
    return Eigen::Map<const VectorXd, 0, Eigen::InnerStride<2>>(theta_.data(), sensors());
  }
  VectorXd betas() const {
    return Eigen::Map<const VectorXd, 0, Eigen::InnerStride<2>>(theta_.data() + 1, sensors());
  }

 private:
  VectorXd theta_;
};

/// Ground-truth forward response y = omega * x + phi + N(0, sigma^2).
struct ForwardSensorModel {
  VectorXd gains;
  VectorXd offsets;
  VectorXd noise_vars;

  Index sensors() const noexcept { return gains.size(); }

  void validate() const {
    if (offsets.size() != gains.size() || (noise_vars.size() != 0 && noise_vars.size() != gains.size()))
      raise(ErrorKind::DimensionMismatch, "gains, offsets and noise_vars must have equal length");
    for (Index i = 0; i < gains.size(); ++i)
      if (gains(i) == 0.0 || !std::isfinite(gains(i)))
        raise(ErrorKind::DegenerateGain, "gain of sensor " + std::to_string(i) + " is zero");
    if (noise_vars.size() != 0 && (noise_vars.array() < 0.0).any())
      raise(ErrorKind::InvalidConfig, "noise variances must be non-negative");
  }
};

/// (omega, phi) -> (alpha, beta) = (1/omega, -phi/omega).
inline CalibrationParams to_inverse_params(const ForwardSensorModel& model) {
  model.validate();
  VectorXd theta(2 * model.sensors());
  for (Index i = 0; i < model.sensors(); ++i) {
    theta(2 * i) = 1.0 / model.gains(i);
    theta(2 * i + 1) = -model.offsets(i) / model.gains(i);
  }
  return CalibrationParams(std::move(theta));
}

/// Inverse of to_inverse_params. The returned model carries no noise variances.
inline ForwardSensorModel from_inverse_params(const CalibrationParams& params) {
  const Index n = params.sensors();
  ForwardSensorModel model{VectorXd(n), VectorXd(n), VectorXd()};
  for (Index i = 0; i < n; ++i) {
    model.gains(i) = 1.0 / params.alpha(i);
    model.offsets(i) = -params.beta(i) / params.alpha(i);
  }
  return model;
}

/// P = N*I - 1*1^T.
inline MatrixXd centering_matrix(Index n) {
  if (n < 2) raise(ErrorKind::InvalidSize, "centering matrix needs N >= 2");
  return static_cast<double>(n) * MatrixXd::Identity(n, n) - MatrixXd::Ones(n, n);
}

/// All 2x2 products V_i^T V_j with V_i = [y_i, 1]. Stored compactly as the
/// cross products Y^T Y, the column sums and M.
class GramBlockGrid {
 public:
  GramBlockGrid(MatrixXd cross, VectorXd sums, Index samples)
      : cross_(std::move(cross)), sums_(std::move(sums)), samples_(samples) {
    if (cross_.rows() != cross_.cols() || cross_.rows() != sums_.size())
      raise(ErrorKind::DimensionMismatch, "gram grid components disagree in size");
  }

  Index sensors() const noexcept { return sums_.size(); }
  Index samples() const noexcept { return samples_; }

  Eigen::Matrix2d block(Index i, Index j) const {
    Eigen::Matrix2d b;
    b << cross_(i, j), sums_(i), sums_(j), static_cast<double>(samples_);
    return b;
  }

  const MatrixXd& cross_products() const noexcept { return cross_; }
  const VectorXd& column_sums() const noexcept { return sums_; }

 private:
  MatrixXd cross_;
  VectorXd sums_;
  Index samples_;
};

inline GramBlockGrid gram_blocks(const MatrixXd& readings) {
  MatrixXd cross = MatrixXd::Zero(readings.cols(), readings.cols());
  cross.selfadjointView<Eigen::Lower>().rankUpdate(readings.transpose());
  cross = cross.selfadjointView<Eigen::Lower>();
  return GramBlockGrid(std::move(cross), readings.colwise().sum().transpose(), readings.rows());
}

inline GramBlockGrid gram_blocks(const SensorDataset& data) { return gram_blocks(data.readings()); }

enum class WeightingMode { Identity, Whitened };

struct WeightingSpec {
  WeightingMode mode = WeightingMode::Identity;
  std::optional<VectorXd> noise_vars;
  std::optional<VectorXd> alphas;

  static WeightingSpec identity() { return {}; }
  static WeightingSpec whitened(VectorXd noise_vars, VectorXd alphas) {
    return {WeightingMode::Whitened, std::move(noise_vars), std::move(alphas)};
  }
};

/// Diagonal of the per-sensor equation-noise covariance, alpha_i^2 * sigma_i^2.
inline VectorXd equation_noise_vars(const VectorXd& noise_vars, const VectorXd& alphas) {
  return alphas.array().square() * noise_vars.array();
}

/// P * pinv(P * diag(d) * P) * P, the Kronecker factor of Gamma^T pinv(Gamma Sigma Gamma^T) Gamma.
inline MatrixXd whitened_weight(const VectorXd& equation_vars) {
  const MatrixXd p = centering_matrix(equation_vars.size());
  const MatrixXd pdp = p * equation_vars.asDiagonal() * p;
  return linalg::symmetrize(p * linalg::pinv_symmetric(pdp) * p);
}

/// N x N matrix Omega with G block (i,j) = Omega(i,j) * V_i^T V_j.
inline MatrixXd block_weight_matrix(const WeightingSpec& spec, Index n) {
  if (spec.mode == WeightingMode::Identity) {
    return static_cast<double>(n) * centering_matrix(n);
  }
  if (!spec.noise_vars || !spec.alphas)
    raise(ErrorKind::MissingNoiseModel, "whitened weighting needs noise variances and alphas");
  const VectorXd& vars = *spec.noise_vars;
  const VectorXd& alphas = *spec.alphas;
  if (vars.size() != n || alphas.size() != n)
    raise(ErrorKind::DimensionMismatch, "noise model length does not match sensor count");
  if ((vars.array() <= 0.0).any() || !vars.allFinite())
    raise(ErrorKind::MissingNoiseModel, "whitened weighting needs strictly positive noise variances");
  if ((alphas.array() == 0.0).any() || !alphas.allFinite())
    raise(ErrorKind::MissingNoiseModel, "whitened weighting needs nonzero alphas");
  return whitened_weight(equation_noise_vars(vars, alphas));
}

inline MatrixXd assemble_G(const GramBlockGrid& grams, const MatrixXd& omega) {
  const Index n = grams.sensors();
  if (omega.rows() != n || omega.cols() != n)
    raise(ErrorKind::DimensionMismatch, "weight matrix is " + std::to_string(omega.rows()) + "x" +
                                            std::to_string(omega.cols()) + ", expected " +
                                            std::to_string(n) + "x" + std::to_string(n));
  MatrixXd g(2 * n, 2 * n);
  const MatrixXd& cross = grams.cross_products();
  const VectorXd& sums = grams.column_sums();
  const double m = static_cast<double>(grams.samples());
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const double w = 0.5 * (omega(i, j) + omega(j, i));
      g(2 * i, 2 * j) = w * cross(i, j);
      g(2 * i, 2 * j + 1) = w * sums(i);
      g(2 * i + 1, 2 * j) = w * sums(j);
      g(2 * i + 1, 2 * j + 1) = w * m;
      if (i != j) g.block<2, 2>(2 * j, 2 * i) = g.block<2, 2>(2 * i, 2 * j).transpose();
    }
  }
  return g;
}

/// The interleaved offset-shift direction [0, 1, 0, 1, ...]. It lies in the
/// nullspace of every G because P annihilates the all-ones vector.
inline VectorXd offset_shift_direction(Index n) {
  VectorXd e = VectorXd::Zero(2 * n);
  for (Index i = 0; i < n; ++i) e(2 * i + 1) = 1.0;
  return e;
}

}  // namespace calibnet
