#pragma once

// Fisher information and Cramer-Rao bounds for the calibration parameters.

#include "calibnet/error.hpp"
#include "calibnet/estimators.hpp"
#include "calibnet/linalg.hpp"
#include "calibnet/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string_view>

namespace calibnet {

enum class CrbKind { Constrained, Unconstrained };

inline std::string_view to_string(CrbKind kind) {
  return kind == CrbKind::Constrained ? "constrained" : "unconstrained";
}

struct CrbResult {
  MatrixXd sigma_theta;
  double rcrb = 0.0;
  CrbKind kind = CrbKind::Unconstrained;

  static CrbResult from_covariance(MatrixXd sigma, CrbKind kind) {
    CrbResult r{linalg::symmetrize(sigma), 0.0, kind};
    r.rcrb = std::sqrt(std::max(r.sigma_theta.trace(), 0.0));
    return r;
  }

  /// Per-sensor square roots of the (alpha, alpha) and (beta, beta) variances.
  Eigen::MatrixX2d marginal_std() const {
    const Index n = sigma_theta.rows() / 2;
    Eigen::MatrixX2d out(n, 2);
    for (Index i = 0; i < n; ++i) {
      out(i, 0) = std::sqrt(std::max(sigma_theta(2 * i, 2 * i), 0.0));
      out(i, 1) = std::sqrt(std::max(sigma_theta(2 * i + 1, 2 * i + 1), 0.0));
    }
    return out;
  }
};

namespace detail {

inline void check_noise(const VectorXd& noise_vars, Index n) {
  if (noise_vars.size() != n)
    raise(ErrorKind::DimensionMismatch, "noise variance count does not match sensor count");
  for (Index i = 0; i < n; ++i)
    if (!(noise_vars(i) > 0.0))
      raise(ErrorKind::DegenerateNoise,
            "sensor " + std::to_string(i) + " has zero noise variance; the Fisher information is undefined");
}

}  // namespace detail

/// Fisher information from a regression matrix built out of `responses` (one
/// column per sensor) and the equation-noise covariance diag(alpha^2 sigma^2).
inline MatrixXd fisher_information(const MatrixXd& responses, const VectorXd& noise_vars,
                                   const VectorXd& alphas) {
  const Index n = responses.cols();
  detail::check_noise(noise_vars, n);
  if (alphas.size() != n) raise(ErrorKind::DimensionMismatch, "alpha count does not match sensor count");
  if (responses.rows() < 2) raise(ErrorKind::TooFewRows, "need M >= 2 samples");
  const MatrixXd omega = whitened_weight(equation_noise_vars(noise_vars, alphas));
  return assemble_G(gram_blocks(responses), omega);
}

/// Fisher information at the true parameters, using the noiseless responses
/// omega_i * x + phi_i.
inline MatrixXd fisher_information(const ForwardSensorModel& truth, const VectorXd& phenomenon) {
  truth.validate();
  const Index n = truth.sensors();
  const Index m = phenomenon.size();
  if (m < 2) raise(ErrorKind::TooFewRows, "need M >= 2 samples");
  detail::check_noise(truth.noise_vars, n);
  const double mean = phenomenon.mean();
  if ((phenomenon.array() - mean).abs().maxCoeff() <= 1e-12 * std::max(1.0, std::abs(mean)))
    raise(ErrorKind::ConstantPhenomenon, "phenomenon has zero variance; gains are unidentifiable");
  MatrixXd responses(m, n);
  for (Index i = 0; i < n; ++i)
    responses.col(i) = truth.gains(i) * phenomenon.array() + truth.offsets(i);
  return fisher_information(responses, truth.noise_vars, truth.gains.cwiseInverse());
}

/// Fisher information from measured (noisy) readings, with alphas from an
/// estimate. Used when no ground truth exists.
inline MatrixXd fisher_information_measured(const SensorDataset& data, const VectorXd& noise_vars,
                                            const VectorXd& alphas) {
  return fisher_information(data.readings(), noise_vars, alphas);
}

/// Reduced information below this fraction of its largest eigenvalue (after
/// diagonal equilibration) counts as unidentified.
inline constexpr double kAmbiguityTol = 1e-10;

inline CrbResult constrained_crb(const MatrixXd& fim, const ConstraintSet& constraints) {
  const Index n2 = fim.rows();
  if (fim.cols() != n2 || constraints.matrix().cols() != n2)
    raise(ErrorKind::DimensionMismatch, "F and C disagree on the parameter count");
  // Work in diagonally equilibrated coordinates theta = S t so gain and offset scales do not mix.
  VectorXd s(n2);
  for (Index k = 0; k < n2; ++k) s(k) = fim(k, k) > 0.0 ? 1.0 / std::sqrt(fim(k, k)) : 1.0;
  const MatrixXd u = linalg::nullspace(constraints.matrix() * s.asDiagonal()).basis;
  if (u.cols() == 0) return CrbResult::from_covariance(MatrixXd::Zero(n2, n2), CrbKind::Constrained);

  const MatrixXd balanced = linalg::symmetrize(u.transpose() * (s.asDiagonal() * fim * s.asDiagonal()) * u);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(balanced);
  const VectorXd& values = eig.eigenvalues();
  const double lambda_max = values.cwiseAbs().maxCoeff();
  if (!(lambda_max > 0.0) || values(0) <= kAmbiguityTol * lambda_max) {
    VectorXd direction = s.asDiagonal() * (u * eig.eigenvectors().col(0));
    direction.normalize();
    std::ostringstream msg;
    msg << "constraints leave the parameters unidentified along direction [";
    for (Index k = 0; k < direction.size(); ++k) msg << (k ? ", " : "") << direction(k);
    msg << "] (theta order alpha_1, beta_1, ...)";
    raise(ErrorKind::UnresolvedAmbiguity, msg.str());
  }
  const MatrixXd inv_reduced =
      eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  const MatrixXd su = s.asDiagonal() * u;
  return CrbResult::from_covariance(su * inv_reduced * su.transpose(), CrbKind::Constrained);
}

inline CrbResult unconstrained_crb(const MatrixXd& fim) {
  return CrbResult::from_covariance(linalg::pinv_symmetric(fim), CrbKind::Unconstrained);
}

}  // namespace calibnet
