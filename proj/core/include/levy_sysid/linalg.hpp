#pragma once

#include <string>

#include <Eigen/Dense>

namespace levy_sysid {

/// Cholesky factor of a Hermitian positive definite matrix. Construction
/// throws NumericalError naming `what` if the matrix is not PD.
class HermitianFactor {
 public:
  HermitianFactor(const Eigen::MatrixXcd& a, const std::string& what);

  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& b) const { return llt_.solve(b); }
  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const { return llt_.solve(b); }

  /// x^* A^{-1} x (real for Hermitian A).
  double inverse_form(const Eigen::VectorXcd& x) const;

  Eigen::Index size() const { return llt_.rows(); }

 private:
  Eigen::LLT<Eigen::MatrixXcd> llt_;
};

/// Largest deviation from Hermitian symmetry, max |A - A^*|.
double hermitian_defect(const Eigen::MatrixXcd& a);

/// Inverse of a symmetric positive definite matrix, or a NaN matrix when the
/// smallest eigenvalue is below `rel_floor` times the largest.
Eigen::MatrixXd spd_inverse_or_nan(const Eigen::MatrixXd& a, double rel_floor = 1e-12);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

/// Symmetrized (A + A^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

/// Sample covariance of the rows of `x` (divides by n - 1).
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x);

/// Sample cross covariance of the rows of `x` and `y`.
Eigen::MatrixXd sample_cross_covariance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

}  // namespace levy_sysid
