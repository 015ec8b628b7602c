#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace calibnet::linalg {

/// Eigenvalue cutoff shared by every pseudoinverse in the library: values at or
/// below eps * n * lambda_max are treated as zero.
inline double pinv_cutoff(double lambda_max, Eigen::Index n) {
  return std::numeric_limits<double>::epsilon() * static_cast<double>(n) * lambda_max;
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

/// Moore-Penrose pseudoinverse of a symmetric positive semi-definite matrix via
/// its eigendecomposition.
inline Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(a));
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double lambda_max = std::max(values.cwiseAbs().maxCoeff(), 0.0);
  const double cutoff = pinv_cutoff(lambda_max, n);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(values(k)) > cutoff) inv(k) = 1.0 / values(k);
  }
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  return symmetrize(vecs * inv.asDiagonal() * vecs.transpose());
}

/// Number of eigenvalues of a symmetric matrix at or below the shared cutoff.
inline Eigen::Index numerical_nullity(const Eigen::MatrixXd& a, double relative_tol = -1.0) {
  const Eigen::Index n = a.rows();
  if (n == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd values = eig.eigenvalues().cwiseAbs();
  const double lambda_max = values.maxCoeff();
  const double cutoff = relative_tol < 0.0 ? pinv_cutoff(lambda_max, n) : relative_tol * lambda_max;
  return static_cast<Eigen::Index>((values.array() <= cutoff).count());
}

/// Orthonormal basis of null(c), computed from a column-pivoted QR of c^T.
/// Returns the basis together with the numerical rank of c.
struct NullspaceBasis {
  Eigen::MatrixXd basis;
  Eigen::Index rank = 0;
};

inline NullspaceBasis nullspace(const Eigen::MatrixXd& c) {
  const Eigen::Index n = c.cols();
  if (c.rows() == 0) return {Eigen::MatrixXd::Identity(n, n), 0};
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.transpose());
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return {q.rightCols(n - rank), rank};
}

}  // namespace calibnet::linalg
