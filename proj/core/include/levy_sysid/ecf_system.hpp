#pragma once

#include <vector>

#include <Eigen/Dense>

#include "levy_sysid/ecf_iid.hpp"
#include "levy_sysid/linalg.hpp"
#include "levy_sysid/linear_system.hpp"
#include "levy_sysid/noise_models.hpp"

namespace levy_sysid {

/// Score family for re-estimating the dynamics.
///   Sensitivity: h_{k,n} = (exp(i u_k eps_n) - cf(u_k)) d eps_n / d theta   (M p moments)
///   Plain:       f_{k,n} =  exp(i u_k eps_n) - cf(u_k)                        (M moments)
/// Plain is a comparison baseline only; it is not efficient.
enum class ScoreVariant { Sensitivity, Plain };

struct Stage3Options {
  ScoreVariant score = ScoreVariant::Sensitivity;
  int max_iter = 100;
  double tau = 1e-8;
  double step_tol = 1e-8;  // converged iff final GN step <= step_tol (1 + |theta|)
  Eigen::Index burn_in = 500;
};

/// Per-sample sensitivity scores on `grid` (used as given, no conjugate
/// closure). Column k * p + j holds frequency k, parameter j.
struct Stage3Scores {
  Eigen::MatrixXcd per_sample;  // N' x (M p), rows n >= burn_in
  Eigen::VectorXcd mean;        // M p
};

Stage3Scores stage3_scores(const Eigen::VectorXd& dy, const SystemParams& theta,
                           const NoiseParams& eta, const FrequencyGrid& grid,
                           Eigen::Index burn_in = 500);

/// d hbar / d theta, (M p) x p. With `full` the second-order
/// (exp(i u eps) - cf) eps_theta_theta term is included; without it this is
/// the Gauss-Newton Jacobian.
Eigen::MatrixXcd stage3_jacobian(const Eigen::VectorXd& dy, const SystemParams& theta,
                                 const NoiseParams& eta, const FrequencyGrid& grid,
                                 Eigen::Index burn_in = 500, bool full = true);

/// Materialized C (x) R. Intended for small sizes and checks; the estimator
/// only ever applies the inverse factorwise.
Eigen::MatrixXcd kronecker_weight(const Eigen::MatrixXcd& c, const Eigen::MatrixXd& r_p);

/// Applies (C (x) R)^{-1} = C^{-1} (x) R^{-1} without forming the product.
/// For a moment vector laid out as an M x p matrix H (row k = block k),
/// K^{-1} vec(H) = vec(C^{-1} H R^{-1}).
class KroneckerInverse {
 public:
  KroneckerInverse(const Eigen::MatrixXcd& c, const Eigen::MatrixXd& r_p);

  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& blocks) const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& stacked) const;
  /// Re <a, b>_K = Re vec(a)^* K^{-1} vec(b).
  double inner(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) const;
  /// Dense C^{-1} (x) R^{-1}.
  Eigen::MatrixXcd dense() const;

  Eigen::Index m() const { return m_; }
  Eigen::Index p() const { return p_; }

 private:
  Eigen::Index m_;
  Eigen::Index p_;
  HermitianFactor c_;
  Eigen::LLT<Eigen::MatrixXd> r_;
};

struct Stage3Result {
  Eigen::VectorXd theta_hat2;
  FrequencyGrid grid;           // conjugate-closed grid used for the moments
  Eigen::VectorXcd psi;         // i u_k cf(u_k) on `grid`
  double kappa = 0.0;           // psi^* C^{-1} psi
  double kappa_imag = 0.0;      // imaginary residue of the Hermitian form
  Eigen::MatrixXd avar_stage3;  // kappa^{-1} R_P*^{-1}; divide by N for finite-sample covariance
  double efficiency_ratio_vs_pe = 0.0;  // kappa * sigma^2 = |Sigma_P| / |avar_stage3|
  double cost = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
};

/// Stage 3: Gauss-Newton re-estimation of theta from the sensitivity-weighted
/// ECF scores with K = C (x) R_P*, starting at the PE estimate. The noise
/// parameters stay frozen at `eta_hat`.
Stage3Result stage3_estimate(const Eigen::VectorXd& dy, const SystemParams& theta_init,
                             const NoiseParams& eta_hat, const FrequencyGrid& grid,
                             const Eigen::MatrixXd& r_p_star, const Stage3Options& opts = {});

/// One full Gauss-Newton step of the stage-3 cost taken from `theta`:
/// -(J^* K^{-1} J)^{-1} Re(J^* K^{-1} hbar). At the true parameters this is
/// the linear (martingale) part of the estimation error.
Eigen::VectorXd stage3_gn_step(const Eigen::VectorXd& dy, const SystemParams& theta,
                               const NoiseParams& eta, const FrequencyGrid& grid,
                               const Eigen::MatrixXd& r_p_star, const Stage3Options& opts = {});

/// psi = (i u_k cf(u_k))_k.
Eigen::VectorXcd psi_vector(const NoiseParams& model, const FrequencyGrid& grid);

/// psi^* C^{-1} psi with C regularized by tau (trace(C)/M) I when
/// `relative_ridge`, else by tau I.
double kappa(const NoiseParams& model, const FrequencyGrid& grid, double tau = 1e-8,
             bool relative_ridge = true);

/// Location Fisher information E[(f'/f)^2] by adaptive quadrature.
/// Throws UnsupportedError when the model has no density.
double fisher_location(const NoiseParams& model);

struct KappaSeries {
  std::vector<Eigen::Index> m_values;
  Eigen::VectorXd kappa;       // one value per accepted m
  bool ill_conditioned = false;  // true if the series was cut short
  double u_max = 0.0;
};

/// kappa on nested linear grids m points over (0, u_max], u_max from
/// cf_decay_frequency. Uses a fixed absolute ridge tau I so that nested grids
/// give a nondecreasing sequence.
KappaSeries continuum_limit_kappa(const NoiseParams& model,
                                  const std::vector<Eigen::Index>& m_values, double tau = 1e-8);

}  // namespace levy_sysid
