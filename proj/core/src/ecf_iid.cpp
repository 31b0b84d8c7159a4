#include "levy_sysid/ecf_iid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "levy_sysid/error.hpp"
#include "levy_sysid/linalg.hpp"

namespace levy_sysid {

namespace {

constexpr double kArmijo = 1e-4;

// Near the optimum the predicted decrease can fall below the rounding error of
// the cost itself; allow that much slack in the sufficient-decrease test.
double rounding_slack(double cost) {
  return 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cost);
}

constexpr int kMaxHalvings = 50;

Eigen::MatrixXcd weight_matrix(const NoiseParams& model, const FrequencyGrid& grid,
                               const EcfOptions& opts) {
  if (opts.weighting == Weighting::Identity) {
    return Eigen::MatrixXcd::Identity(grid.size(), grid.size());
  }
  return regularize(c_matrix(model, grid), opts.tau);
}

Eigen::VectorXcd model_cf(const NoiseParams& model, const FrequencyGrid& grid) {
  Eigen::VectorXcd out(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) out[k] = cf(model, grid[k]);
  return out;
}

// Empirical cf on a conjugate-closed grid, evaluating only the positive half.
Eigen::VectorXcd closed_empirical_cf(const Eigen::VectorXd& samples, const FrequencyGrid& closed) {
  const Eigen::Index m = closed.size() / 2;
  const Eigen::VectorXd pos = closed.points().tail(m);
  const Eigen::VectorXcd half = empirical_cf(samples, pos);
  Eigen::VectorXcd out(2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out[m + k] = half[k];
    out[m - 1 - k] = std::conj(half[k]);
  }
  return out;
}

}  // namespace

FrequencyGrid::FrequencyGrid(Eigen::VectorXd points) : u_(std::move(points)) {
  if (u_.size() == 0) throw ConfigError("FrequencyGrid: empty grid");
  for (Eigen::Index k = 0; k < u_.size(); ++k) {
    if (!std::isfinite(u_[k]) || u_[k] == 0.0) {
      throw ConfigError("FrequencyGrid: points must be finite and nonzero");
    }
    if (k > 0 && !(u_[k] > u_[k - 1])) {
      throw ConfigError("FrequencyGrid: points must be strictly increasing");
    }
  }
}

FrequencyGrid FrequencyGrid::from_unsorted(Eigen::VectorXd points) {
  std::sort(points.begin(), points.end());
  return FrequencyGrid(std::move(points));
}

FrequencyGrid FrequencyGrid::conjugate_closure() const {
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(2 * u_.size()));
  for (double u : u_) {
    all.push_back(std::abs(u));
    all.push_back(-std::abs(u));
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return FrequencyGrid(Eigen::Map<Eigen::VectorXd>(all.data(), static_cast<Eigen::Index>(all.size())));
}

FrequencyGrid linear_grid(double u_max, Eigen::Index m) {
  if (!(u_max > 0.0) || m < 1) throw ConfigError("linear_grid: need u_max > 0 and m >= 1");
  Eigen::VectorXd u(m);
  for (Eigen::Index k = 0; k < m; ++k) u[k] = u_max * static_cast<double>(k + 1) / static_cast<double>(m);
  return FrequencyGrid(u);
}

FrequencyGrid log_grid(double u_min, double u_max, Eigen::Index m) {
  if (!(u_min > 0.0) || !(u_max > u_min) || m < 2) {
    throw ConfigError("log_grid: need 0 < u_min < u_max and m >= 2");
  }
  Eigen::VectorXd u(m);
  const double ratio = std::log(u_max / u_min);
  for (Eigen::Index k = 0; k < m; ++k) {
    u[k] = u_min * std::exp(ratio * static_cast<double>(k) / static_cast<double>(m - 1));
  }
  return FrequencyGrid(u);
}

double cf_decay_frequency(const NoiseParams& model, double level) {
  const double sd = std::sqrt(moments(model).variance);
  const double du = 0.01 / sd;
  double prev = 0.0;
  for (int j = 1; j <= 10000; ++j) {
    const double u = du * j;
    if (std::abs(cf(model, u)) < level) {
      double lo = prev, hi = u;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (std::abs(cf(model, mid)) < level ? hi : lo) = mid;
      }
      return hi;
    }
    prev = u;
  }
  return 4.0 / sd;
}

FrequencyGrid default_grid(const NoiseParams& model, Eigen::Index m, double level) {
  return linear_grid(cf_decay_frequency(model, level), m);
}

Eigen::VectorXcd empirical_cf(const Eigen::VectorXd& samples, const Eigen::VectorXd& u) {
  const Eigen::Index m = u.size();
  std::vector<double> re(static_cast<std::size_t>(m), 0.0), im(static_cast<std::size_t>(m), 0.0);
  for (const double r : samples) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const double a = u[k] * r;
      re[static_cast<std::size_t>(k)] += std::cos(a);
      im[static_cast<std::size_t>(k)] += std::sin(a);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  Eigen::VectorXcd out(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out[k] = {re[static_cast<std::size_t>(k)] * inv_n, im[static_cast<std::size_t>(k)] * inv_n};
  }
  return out;
}

Eigen::VectorXcd score_mean(const Eigen::VectorXd& samples, const FrequencyGrid& grid,
                            const NoiseParams& model) {
  if (samples.size() < 1) throw ConfigError("score_mean: need at least one sample");
  return empirical_cf(samples, grid.points()) - model_cf(model, grid);
}

Eigen::MatrixXcd c_matrix(const NoiseParams& model, const FrequencyGrid& grid) {
  const Eigen::Index m = grid.size();
  const Eigen::VectorXcd phi = model_cf(model, grid);
  Eigen::MatrixXcd c(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    c(k, k) = 1.0 - std::norm(phi[k]);
    for (Eigen::Index l = k + 1; l < m; ++l) {
      // cf(-u) = conj(cf(u)) for real-valued increments.
      c(k, l) = cf(model, grid[k] - grid[l]) - phi[k] * std::conj(phi[l]);
      c(l, k) = std::conj(c(k, l));
    }
  }
  return c;
}

Eigen::MatrixXcd regularize(const Eigen::MatrixXcd& c, double tau) {
  const double scale = tau * c.trace().real() / static_cast<double>(c.rows());
  Eigen::MatrixXcd out = c;
  out.diagonal().array() += scale;
  return out;
}

Eigen::MatrixXcd cf_jacobian(const NoiseParams& model, const FrequencyGrid& grid) {
  const Eigen::Index r = static_cast<Eigen::Index>(parameter_count(model.kind));
  Eigen::MatrixXcd g(grid.size(), r);
  for (Eigen::Index k = 0; k < grid.size(); ++k) g.row(k) = cf_grad_eta(model, grid[k]).transpose();
  return g;
}

Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& k,
                                    const Eigen::MatrixXcd& c) {
  const HermitianFactor kf(k, "weighting matrix K");
  const Eigen::MatrixXcd kig = kf.solve(g);
  const Eigen::MatrixXd t = (g.adjoint() * kig).real();
  const Eigen::MatrixXd s = (kig.adjoint() * c * kig).real();
  const Eigen::MatrixXd ti = spd_inverse_or_nan(t);
  return symmetrize(ti * s * ti);
}

EcfIidResult ecf_iid_estimate(const Eigen::VectorXd& samples, const FrequencyGrid& grid,
                              const NoiseParams& init, const EcfOptions& opts) {
  validate(init);
  const Eigen::Index r = static_cast<Eigen::Index>(parameter_count(init.kind));
  if (grid.size() < r) {
    throw ConfigError("ecf_iid_estimate: grid has " + std::to_string(grid.size()) +
                      " points but the model has " + std::to_string(r) + " parameters");
  }
  if (samples.size() < 1) throw ConfigError("ecf_iid_estimate: no samples");

  const FrequencyGrid closed = grid.conjugate_closure();
  const Eigen::VectorXcd ecf = closed_empirical_cf(samples, closed);

  EcfIidResult res{.eta_hat = init.eta, .model = init, .grid = closed};
  NoiseParams model = init;
  bool stalled = false;
  double last_step = std::numeric_limits<double>::infinity();

  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    std::optional<HermitianFactor> kf;
    try {
      kf.emplace(weight_matrix(model, closed, opts), "ECF weighting matrix C");
    } catch (const NumericalError&) {
      if (res.iterations == 0) throw;
      stalled = true;
      break;
    }
    const Eigen::VectorXcd hbar = ecf - model_cf(model, closed);
    const Eigen::MatrixXcd jac = -cf_jacobian(model, closed);
    const Eigen::MatrixXcd kij = kf->solve(jac);
    const Eigen::MatrixXd hess = (jac.adjoint() * kij).real();
    const Eigen::VectorXd grad = (kij.adjoint() * hbar).real();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      stalled = true;
      break;
    }
    const Eigen::VectorXd dir = -ldlt.solve(grad);
    if (!dir.allFinite()) {
      stalled = true;
      break;
    }
    last_step = dir.lpNorm<Eigen::Infinity>();
    const double scale = 1.0 + model.eta.lpNorm<Eigen::Infinity>();
    if (last_step <= 1e-13 * scale) break;

    const double cost0 = kf->inverse_form(hbar);
    const double slope = 2.0 * grad.dot(dir);
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k < kMaxHalvings; ++k, alpha *= 0.5) {
      const NoiseParams trial = model.with_eta(model.eta + alpha * dir);
      if (!is_valid(trial)) continue;
      const double c = kf->inverse_form(ecf - model_cf(trial, closed));
      if (c <= cost0 + kArmijo * alpha * slope + rounding_slack(cost0)) {
        model = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (alpha * last_step <= 1e-13 * scale) {
      ++res.iterations;
      break;
    }
  }

  res.eta_hat = model.eta;
  res.model = model;
  res.c_matrix = c_matrix(model, closed);
  res.g_matrix = cf_jacobian(model, closed);
  const Eigen::MatrixXcd c_reg = regularize(res.c_matrix, opts.tau);
  const bool degenerate = near_boundary(model, opts.boundary_margin);
  try {
    const HermitianFactor cf_opt(c_reg, "C matrix");
    res.avar_optimal = spd_inverse_or_nan((res.g_matrix.adjoint() * cf_opt.solve(res.g_matrix)).real());
    res.avar_sandwich = sandwich_covariance(
        res.g_matrix, Eigen::MatrixXcd::Identity(closed.size(), closed.size()), res.c_matrix);
    const HermitianFactor kf(weight_matrix(model, closed, opts), "ECF weighting matrix");
    res.gn_hessian = (res.g_matrix.adjoint() * kf.solve(res.g_matrix)).real();
    res.cost = kf.inverse_form(ecf - model_cf(model, closed));
  } catch (const NumericalError&) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.avar_optimal = Eigen::MatrixXd::Constant(r, r, nan);
    res.avar_sandwich = Eigen::MatrixXd::Constant(r, r, nan);
    res.gn_hessian = Eigen::MatrixXd::Constant(r, r, nan);
    res.cost = nan;
    stalled = true;
  }
  const double scale = 1.0 + model.eta.lpNorm<Eigen::Infinity>();
  res.converged = !stalled && !degenerate && last_step <= opts.step_tol * scale;
  return res;
}

EcfIidResult ecf_on_residuals(const Eigen::VectorXd& dy, const SystemParams& theta,
                              const FrequencyGrid& grid, const NoiseParams& init,
                              const EcfOptions& opts, Eigen::Index burn_in) {
  if (burn_in < 0 || burn_in >= dy.size()) {
    throw ConfigError("ecf_on_residuals: burn_in must be in [0, N)");
  }
  const auto sig = innovations(theta, dy, 0);
  const Eigen::VectorXd resid = sig.eps.tail(dy.size() - burn_in);
  return ecf_iid_estimate(resid, grid, init, opts);
}

}  // namespace levy_sysid
