#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace levy_sysid {

inline constexpr double kDefaultRhoStab = 0.02;

/// Monic ARMA filter A(theta, q^-1) = C(q^-1) / A(q^-1) with
///   A(q^-1) = 1 + a_1 q^-1 + ... + a_pa q^-pa
///   C(q^-1) = 1 + c_1 q^-1 + ... + c_pc q^-pc
/// so that dy_n + sum a_i dy_{n-i} = dz_n + sum c_j dz_{n-j}.
/// theta = (a_1..a_pa, c_1..c_pc).
struct SystemParams {
  Eigen::VectorXd ar;
  Eigen::VectorXd ma;
  double rho_stab = kDefaultRhoStab;

  Eigen::Index dim() const { return ar.size() + ma.size(); }
  Eigen::VectorXd theta() const;
  SystemParams with_theta(const Eigen::VectorXd& theta) const;

  static SystemParams from_theta(const Eigen::VectorXd& theta, Eigen::Index n_ar,
                                 double rho_stab = kDefaultRhoStab);
};

/// Innovations eps_n(theta) and their theta-sensitivities.
///
/// eps_grad is N x p. eps_hess is N x (p*p), row n holding the p x p second
/// derivative matrix in row-major order; empty unless requested.
struct SignalBundle {
  Eigen::VectorXd eps;
  Eigen::MatrixXd eps_grad;
  Eigen::MatrixXd eps_hess;

  Eigen::MatrixXd hessian_at(Eigen::Index n) const;
};

struct StabilityReport {
  bool stable = true;
  double margin = 1.0;  // 1 - max |root|
  std::vector<std::complex<double>> roots;
};

/// Roots of z^p + c_1 z^{p-1} + ... + c_p from companion-matrix eigenvalues.
/// Stable iff max |root| < 1 - rho_stab.
StabilityReport check_stability(const Eigen::VectorXd& poly, double rho_stab = kDefaultRhoStab);

/// Throws StabilityError listing root moduli if the AR part is unstable.
void require_stable(const SystemParams& sys);
/// Throws StabilityError if the MA part (the inverse filter) is unstable.
void require_inverse_stable(const SystemParams& sys);

/// dy = A(theta) dz with zero initial state.
Eigen::VectorXd simulate(const SystemParams& sys, const Eigen::VectorXd& noise);

/// eps = A^{-1}(theta) dy with zero initial state. order 0, 1 or 2 selects
/// how many derivative levels are filled in.
SignalBundle innovations(const SystemParams& sys, const Eigen::VectorXd& dy, int order = 1);

/// Radially shrinks every root with modulus >= 1 - rho_stab to 1 - 2 rho_stab
/// and rebuilds real coefficients. Returns the input untouched when it is
/// already stable.
SystemParams project_stable(const SystemParams& sys);

/// Coefficients (c_1..c_p) of prod (1 - r_k q^-1) for a conjugate-closed root set.
Eigen::VectorXd poly_from_roots(const std::vector<std::complex<double>>& roots);

}  // namespace levy_sysid
