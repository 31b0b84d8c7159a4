#pragma once

#include <optional>

#include <Eigen/Dense>

#include "levy_sysid/linear_system.hpp"

namespace levy_sysid {

inline constexpr Eigen::Index kDefaultBurnIn = 500;

struct PeOptions {
  int max_iter = 200;
  double tol_g = 1e-8;  // converged iff |grad|_inf < tol_g * N
  Eigen::Index burn_in = kDefaultBurnIn;
  double rho_stab = kDefaultRhoStab;
  int long_ar_order = 20;  // used when no initial system is given
};

struct PeCost {
  double value = 0.0;     // 1/2 sum eps_n^2 over n >= burn_in
  Eigen::VectorXd grad;   // sum eps_theta,n eps_n
};

struct PeResult {
  Eigen::VectorXd theta_hat;
  double cost = 0.0;
  Eigen::MatrixXd r_p_star;  // (1/N') sum eps_theta eps_theta^T at theta_hat
  double sigma2_hat = 0.0;   // (1/N') sum eps^2 at theta_hat
  Eigen::MatrixXd sigma_p;   // sigma2_hat * r_p_star^{-1}; NaN if r_p_star is singular
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd grad;
};

PeCost pe_cost(const SystemParams& sys, const Eigen::VectorXd& dy,
               Eigen::Index burn_in = kDefaultBurnIn);

/// Two-step long-AR initializer: least-squares AR(order) fit, then a linear
/// regression of dy on its own lags and the AR residual lags.
SystemParams long_ar_initial(const Eigen::VectorXd& dy, Eigen::Index n_ar, Eigen::Index n_ma,
                             const PeOptions& opts = {});

/// Damped Gauss-Newton minimization of the prediction-error cost, starting
/// from `init`. Non-convergence is reported through `converged`.
PeResult pe_estimate(const Eigen::VectorXd& dy, const SystemParams& init,
                     const PeOptions& opts = {});

/// R_P* = sigma^2 sum_k g_k g_k^T from the impulse response g of the
/// innovation sensitivities at `sys` (stationary value, no sampling).
Eigen::MatrixXd r_p_star_exact(const SystemParams& sys, double noise_variance,
                               Eigen::Index horizon = 0);

}  // namespace levy_sysid
