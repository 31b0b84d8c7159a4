#pragma once

#include <Eigen/Dense>

#include "levy_sysid/linear_system.hpp"
#include "levy_sysid/noise_models.hpp"

namespace levy_sysid {

/// Evaluation frequencies u_1 < ... < u_M, all finite and nonzero.
class FrequencyGrid {
 public:
  explicit FrequencyGrid(Eigen::VectorXd points);
  /// Sorts `points` first; they must still be distinct.
  static FrequencyGrid from_unsorted(Eigen::VectorXd points);

  const Eigen::VectorXd& points() const { return u_; }
  Eigen::Index size() const { return u_.size(); }
  double operator[](Eigen::Index k) const { return u_[k]; }

  /// Sorted union of {u_k} and {-u_k}. Each frequency enters the moment
  /// conditions together with its conjugate partner, which makes the complex
  /// Hermitian forms equal to the real (cos, sin) GMM forms.
  FrequencyGrid conjugate_closure() const;

  bool operator==(const FrequencyGrid&) const = default;

 private:
  Eigen::VectorXd u_;
};

/// m equally spaced points on (0, u_max].
FrequencyGrid linear_grid(double u_max, Eigen::Index m);
/// m log-spaced points on [u_min, u_max].
FrequencyGrid log_grid(double u_min, double u_max, Eigen::Index m);

/// Smallest u > 0 with |cf(u)| < level. When |cf| never drops below `level`
/// (laws with an atom, e.g. compound Poisson) returns 4 / sd instead.
double cf_decay_frequency(const NoiseParams& model, double level = 0.05);

/// Default grid: m points equally spaced on (0, cf_decay_frequency(model)].
FrequencyGrid default_grid(const NoiseParams& model, Eigen::Index m = 10, double level = 0.05);

/// Mean score (1/N) sum_n exp(i u_k r_n) - cf(u_k), one entry per grid point.
Eigen::VectorXcd score_mean(const Eigen::VectorXd& samples, const FrequencyGrid& grid,
                            const NoiseParams& model);

/// Empirical characteristic function (1/N) sum_n exp(i u_k r_n).
Eigen::VectorXcd empirical_cf(const Eigen::VectorXd& samples, const Eigen::VectorXd& u);

/// Score covariance C_kl = cf(u_k - u_l) - cf(u_k) cf(-u_l), unregularized.
Eigen::MatrixXcd c_matrix(const NoiseParams& model, const FrequencyGrid& grid);

/// C + tau (trace(C) / M) I.
Eigen::MatrixXcd regularize(const Eigen::MatrixXcd& c, double tau = 1e-8);

/// M x r matrix of d cf(u_k) / d eta.
Eigen::MatrixXcd cf_jacobian(const NoiseParams& model, const FrequencyGrid& grid);

enum class Weighting { Identity, OptimalC };

struct EcfOptions {
  Weighting weighting = Weighting::OptimalC;
  int max_iter = 200;
  double tau = 1e-8;
  double step_tol = 1e-8;  // converged iff final GN step <= step_tol (1 + |eta|)
  double boundary_margin = 1e-6;
};

struct EcfIidResult {
  Eigen::VectorXd eta_hat;
  NoiseParams model;          // model kind and h with eta_hat filled in
  FrequencyGrid grid;         // conjugate-closed grid used for the moments
  Eigen::MatrixXcd c_matrix;  // unregularized C at eta_hat
  Eigen::MatrixXcd g_matrix;  // d cf / d eta at eta_hat
  Eigen::MatrixXd avar_optimal;   // (G^* C^{-1} G)^{-1}
  Eigen::MatrixXd avar_sandwich;  // K = I sandwich
  Eigen::MatrixXd gn_hessian;     // G^* K^{-1} G at eta_hat, with the K used in the fit
  double cost = 0.0;              // hbar^* K^{-1} hbar
  int iterations = 0;
  bool converged = false;
};

/// Weighted least-squares match of the model cf to the empirical cf.
/// `init` carries the model kind, h and the starting eta.
EcfIidResult ecf_iid_estimate(const Eigen::VectorXd& samples, const FrequencyGrid& grid,
                              const NoiseParams& init, const EcfOptions& opts = {});

/// Stage 2: invert the system at `theta`, drop the burn-in, and run the
/// i.i.d. ECF fit on the innovations.
EcfIidResult ecf_on_residuals(const Eigen::VectorXd& dy, const SystemParams& theta,
                              const FrequencyGrid& grid, const NoiseParams& init,
                              const EcfOptions& opts = {}, Eigen::Index burn_in = 500);

/// (G^* K^{-1} G)^{-1} G^* K^{-1} C K^{-1} G (G^* K^{-1} G)^{-1}, real part.
Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& k,
                                    const Eigen::MatrixXcd& c);

}  // namespace levy_sysid
