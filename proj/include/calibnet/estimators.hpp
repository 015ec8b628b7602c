#pragma once

// Constrained (weighted) least-squares calibration and the rank-1 blind baseline.
//
// The estimate minimizes 0.5 * theta^T G theta subject to C theta = d. The
// minimizer and its Lagrange multipliers solve the KKT system
//
//   [ G  C^T ] [ theta  ]   [ 0 ]
//   [ C   0  ] [ lambda ] = [ d ]
//
// which is nonsingular exactly when G is positive definite on null(C).

#include "calibnet/error.hpp"
#include "calibnet/linalg.hpp"
#include "calibnet/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace calibnet {

enum class ConstraintKind { SingleReference, MultiReference, Sum, Custom };

inline std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::SingleReference: return "single_reference";
    case ConstraintKind::MultiReference: return "multi_reference";
    case ConstraintKind::Sum: return "sum";
    case ConstraintKind::Custom: return "custom";
  }
  return "custom";
}

/// Equality constraints C theta = d on the interleaved parameter vector.
class ConstraintSet {
 public:
  ConstraintSet(MatrixXd c, VectorXd d, ConstraintKind kind = ConstraintKind::Custom)
      : c_(std::move(c)), d_(std::move(d)), kind_(kind) {
    if (c_.rows() < 1 || c_.cols() < 2 || c_.cols() % 2 != 0)
      raise(ErrorKind::InvalidSize, "constraint matrix must have at least one row and 2N columns");
    if (c_.rows() > c_.cols())
      raise(ErrorKind::InvalidSize, "more constraints than parameters");
    if (d_.size() != c_.rows())
      raise(ErrorKind::DimensionMismatch, "response vector length does not match constraint rows");
    if (!c_.allFinite() || !d_.allFinite())
      raise(ErrorKind::InconsistentConstraints, "constraints must be finite");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(c_);
    if (qr.rank() != c_.rows())
      raise(ErrorKind::InconsistentConstraints, "constraint matrix is not full row rank");
  }

  const MatrixXd& matrix() const noexcept { return c_; }
  const VectorXd& response() const noexcept { return d_; }
  ConstraintKind kind() const noexcept { return kind_; }
  Index rows() const noexcept { return c_.rows(); }
  Index sensors() const noexcept { return c_.cols() / 2; }

 private:
  MatrixXd c_;
  VectorXd d_;
  ConstraintKind kind_;
};

/// A sensor with known calibration. Trusted sensors without lab values use the
/// ideal (1, 0).
struct Reference {
  Index sensor = 0;
  double alpha = 1.0;
  double beta = 0.0;
};

/// Fixes (alpha, beta) of one sensor: C = e_i^T kron I_2. The index is zero-based.
inline ConstraintSet single_reference_constraint(Index ref_index, double alpha, double beta, Index n) {
  if (n < 2) raise(ErrorKind::InvalidSize, "need at least 2 sensors");
  if (ref_index < 0 || ref_index >= n)
    raise(ErrorKind::IndexOutOfRange, "reference sensor " + std::to_string(ref_index) +
                                          " outside [0, " + std::to_string(n) + ")");
  MatrixXd c = MatrixXd::Zero(2, 2 * n);
  c(0, 2 * ref_index) = 1.0;
  c(1, 2 * ref_index + 1) = 1.0;
  return ConstraintSet(std::move(c), Eigen::Vector2d(alpha, beta), ConstraintKind::SingleReference);
}

inline ConstraintSet single_reference_constraint(Index ref_index, Index n) {
  return single_reference_constraint(ref_index, 1.0, 0.0, n);
}

inline ConstraintSet multi_reference_constraint(const std::vector<Reference>& refs, Index n) {
  if (refs.empty()) raise(ErrorKind::InvalidSize, "reference list is empty");
  if (n < 2) raise(ErrorKind::InvalidSize, "need at least 2 sensors");
  std::set<Index> seen;
  MatrixXd c = MatrixXd::Zero(2 * static_cast<Index>(refs.size()), 2 * n);
  VectorXd d(c.rows());
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Reference& r = refs[k];
    if (r.sensor < 0 || r.sensor >= n)
      raise(ErrorKind::IndexOutOfRange, "reference sensor " + std::to_string(r.sensor) +
                                            " outside [0, " + std::to_string(n) + ")");
    if (!seen.insert(r.sensor).second)
      raise(ErrorKind::DuplicateReference, "sensor " + std::to_string(r.sensor) + " listed twice");
    const Index row = 2 * static_cast<Index>(k);
    c(row, 2 * r.sensor) = 1.0;
    c(row + 1, 2 * r.sensor + 1) = 1.0;
    d(row) = r.alpha;
    d(row + 1) = r.beta;
  }
  const ConstraintKind kind = refs.size() == 1 ? ConstraintKind::SingleReference
                                               : ConstraintKind::MultiReference;
  return ConstraintSet(std::move(c), std::move(d), kind);
}

/// Reference-free anchor: the network-mean calibration equals the ideal (1, 0),
/// i.e. C = 1^T kron I_2 and d = [N, 0].
inline ConstraintSet sum_constraint(Index n) {
  if (n < 2) raise(ErrorKind::InvalidSize, "sum constraint needs N >= 2");
  MatrixXd c = MatrixXd::Zero(2, 2 * n);
  for (Index i = 0; i < n; ++i) {
    c(0, 2 * i) = 1.0;
    c(1, 2 * i + 1) = 1.0;
  }
  return ConstraintSet(std::move(c), Eigen::Vector2d(static_cast<double>(n), 0.0), ConstraintKind::Sum);
}

struct KktSolution {
  VectorXd theta;
  VectorXd lambda;
  double residual_norm = 0.0;
  double rcond = 0.0;

  CalibrationParams params() const { return CalibrationParams(theta); }
};

/// Reciprocal condition estimates below this (after equilibration) are treated
/// as singular.
inline constexpr double kKktMinRcond = 1e-14;

inline KktSolution solve_kkt(const MatrixXd& g, const ConstraintSet& constraints) {
  const Index n2 = g.rows();
  const Index p = constraints.rows();
  if (g.cols() != n2 || constraints.matrix().cols() != n2)
    raise(ErrorKind::DimensionMismatch, "G and C disagree on the parameter count");

  // Symmetric diagonal equilibration of G, then unit-norm constraint rows.
  // Gain and offset columns of G differ by the signal scale squared.
  VectorXd scale(n2);
  for (Index k = 0; k < n2; ++k) scale(k) = g(k, k) > 0.0 ? 1.0 / std::sqrt(g(k, k)) : 1.0;
  MatrixXd c_scaled = constraints.matrix() * scale.asDiagonal();
  VectorXd row_scale = c_scaled.rowwise().norm().cwiseInverse();
  c_scaled = row_scale.asDiagonal() * c_scaled;

  MatrixXd b = MatrixXd::Zero(n2 + p, n2 + p);
  b.topLeftCorner(n2, n2) = scale.asDiagonal() * g * scale.asDiagonal();
  b.topRightCorner(n2, p) = c_scaled.transpose();
  b.bottomLeftCorner(p, n2) = c_scaled;
  VectorXd h = VectorXd::Zero(n2 + p);
  h.tail(p) = row_scale.asDiagonal() * constraints.response();

  Eigen::FullPivLU<MatrixXd> lu(b);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || !(rcond >= kKktMinRcond))
    raise(ErrorKind::SingularKkt,
          "KKT matrix is numerically singular (rcond " + std::to_string(rcond) +
              "); add a constraint or check for constant sensors");
  VectorXd nu = lu.solve(h);
  nu += lu.solve(h - b * nu);  // one step of iterative refinement

  KktSolution sol;
  sol.theta = scale.asDiagonal() * nu.head(n2);
  sol.lambda = row_scale.asDiagonal() * nu.tail(p);
  sol.rcond = rcond;
  const VectorXd top = g * sol.theta + constraints.matrix().transpose() * sol.lambda;
  const VectorXd bottom = constraints.matrix() * sol.theta - constraints.response();
  sol.residual_norm = std::sqrt(top.squaredNorm() + bottom.squaredNorm());
  return sol;
}

inline KktSolution calibrate_cls(const GramBlockGrid& grams, const ConstraintSet& constraints) {
  const MatrixXd omega = block_weight_matrix(WeightingSpec::identity(), grams.sensors());
  return solve_kkt(assemble_G(grams, omega), constraints);
}

inline KktSolution calibrate_cls(const SensorDataset& data, const ConstraintSet& constraints) {
  return calibrate_cls(gram_blocks(data), constraints);
}

/// Whitened solve with caller-supplied alphas (e.g. ground truth).
inline KktSolution calibrate_wcls_with_alphas(const GramBlockGrid& grams, const ConstraintSet& constraints,
                                              const VectorXd& noise_vars, const VectorXd& alphas) {
  const MatrixXd omega =
      block_weight_matrix(WeightingSpec::whitened(noise_vars, alphas), grams.sensors());
  return solve_kkt(assemble_G(grams, omega), constraints);
}

inline constexpr int kDefaultWclsIterations = 2;

/// Iteratively reweighted WCLS. The equation-noise covariance needs alpha, so the
/// first weighted solve uses alphas from a CLS pass and each further iteration
/// reuses the latest estimate.
inline KktSolution calibrate_wcls(const GramBlockGrid& grams, const ConstraintSet& constraints,
                                  const VectorXd& noise_vars, int iterations = kDefaultWclsIterations) {
  if (iterations < 1) raise(ErrorKind::InvalidConfig, "WCLS needs at least one iteration");
  if (noise_vars.size() == 0)
    raise(ErrorKind::MissingNoiseModel, "WCLS needs per-sensor noise variances");
  if (noise_vars.size() != grams.sensors())
    raise(ErrorKind::DimensionMismatch, "noise variance count does not match sensor count");
  if ((noise_vars.array() <= 0.0).any())
    raise(ErrorKind::MissingNoiseModel, "WCLS needs strictly positive noise variances");
  KktSolution sol = calibrate_cls(grams, constraints);
  for (int it = 0; it < iterations; ++it) {
    const VectorXd alphas = Eigen::Map<const VectorXd, 0, Eigen::InnerStride<2>>(
        sol.theta.data(), grams.sensors());
    sol = calibrate_wcls_with_alphas(grams, constraints, noise_vars, alphas);
  }
  return sol;
}

inline KktSolution calibrate_wcls(const SensorDataset& data, const ConstraintSet& constraints,
                                  const VectorXd& noise_vars, int iterations = kDefaultWclsIterations) {
  return calibrate_wcls(gram_blocks(data), constraints, noise_vars, iterations);
}

/// Two smallest eigenvalues closer than this (relative to the second one) make
/// the blind direction ambiguous. Both being numerically zero does too.
inline constexpr double kBlindSeparationTol = 1e-6;

/// Rank-1 blind baseline: the unit-norm minimum-eigenvector of the unweighted G,
/// taken within the complement of the offset-shift direction (which every G
/// annihilates). Sign fixed so the mean alpha is positive. Only meaningful up to
/// the affine ambiguity alpha -> a*alpha, beta -> a*beta + b.
inline CalibrationParams blind_calibrate(const GramBlockGrid& grams) {
  const Index n = grams.sensors();
  if (n < 2) raise(ErrorKind::InvalidSize, "blind calibration needs N >= 2");
  const MatrixXd g = assemble_G(grams, block_weight_matrix(WeightingSpec::identity(), n));

  // Orthonormal basis of the complement of the offset-shift direction.
  const VectorXd shift = offset_shift_direction(n);
  const MatrixXd basis = linalg::nullspace(shift.transpose()).basis;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(linalg::symmetrize(basis.transpose() * g * basis));
  const VectorXd& values = eig.eigenvalues();
  const double lambda_max = values.cwiseAbs().maxCoeff();
  const bool both_null = values(1) <= linalg::pinv_cutoff(lambda_max, values.size());
  if (both_null || values(1) - values(0) <= kBlindSeparationTol * std::abs(values(1)))
    raise(ErrorKind::DegenerateData,
          "smallest eigenvalue of G is not isolated; the data do not single out a calibration direction");
  VectorXd theta = basis * eig.eigenvectors().col(0);
  theta.normalize();
  double alpha_sum = 0.0;
  for (Index i = 0; i < n; ++i) alpha_sum += theta(2 * i);
  if (alpha_sum < 0.0) theta = -theta;
  return CalibrationParams(std::move(theta));
}

inline CalibrationParams blind_calibrate(const SensorDataset& data) {
  return blind_calibrate(gram_blocks(data));
}

}  // namespace calibnet
