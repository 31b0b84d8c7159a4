#include "levy_sysid/linalg.hpp"

#include <limits>

#include <Eigen/Eigenvalues>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

HermitianFactor::HermitianFactor(const Eigen::MatrixXcd& a, const std::string& what)
    : llt_(a) {
  if (llt_.info() != Eigen::Success || !a.allFinite()) {
    throw NumericalError(what + " is not positive definite");
  }
  const auto& l = llt_.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i).real() > 0.0)) throw NumericalError(what + " is not positive definite");
  }
}

double HermitianFactor::inverse_form(const Eigen::VectorXcd& x) const {
  return x.dot(llt_.solve(x)).real();
}

double hermitian_defect(const Eigen::MatrixXcd& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd spd_inverse_or_nan(const Eigen::MatrixXd& a, double rel_floor) {
  const Eigen::Index p = a.rows();
  const Eigen::MatrixXd nan = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
  if (p == 0) return Eigen::MatrixXd(0, 0);
  if (!a.allFinite()) return nan;
  const Eigen::MatrixXd s = symmetrize(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= rel_floor * hi) return nan;
  return symmetrize(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  return sample_cross_covariance(x, x);
}

Eigen::MatrixXd sample_cross_covariance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::Index n = x.rows();
  if (n < 2 || y.rows() != n) {
    return Eigen::MatrixXd::Constant(x.cols(), y.cols(), std::numeric_limits<double>::quiet_NaN());
  }
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
  return xc.transpose() * yc / static_cast<double>(n - 1);
}

}  // namespace levy_sysid
