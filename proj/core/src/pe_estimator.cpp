#include "levy_sysid/pe_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

namespace {

constexpr double kArmijo = 1e-4;

// Near the optimum the predicted decrease can fall below the rounding error of
// the cost itself; allow that much slack in the sufficient-decrease test.
double rounding_slack(double cost) {
  return 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cost);
}

constexpr int kMaxHalvings = 40;

struct Evaluation {
  PeCost cost;
  Eigen::MatrixXd info;  // sum eps_theta eps_theta^T
  double sum_sq = 0.0;
};

Evaluation evaluate(const SystemParams& sys, const Eigen::VectorXd& dy, Eigen::Index burn_in,
                    bool with_info) {
  const auto sig = innovations(sys, dy, 1);
  const Eigen::Index n = dy.size();
  const Eigen::Index used = n - burn_in;
  Evaluation ev;
  const auto eps = sig.eps.tail(used);
  const auto grad = sig.eps_grad.bottomRows(used);
  ev.sum_sq = eps.squaredNorm();
  ev.cost.value = 0.5 * ev.sum_sq;
  ev.cost.grad = grad.transpose() * eps;
  if (with_info) ev.info = grad.transpose() * grad;
  return ev;
}

double cost_only(const SystemParams& sys, const Eigen::VectorXd& dy, Eigen::Index burn_in) {
  const auto sig = innovations(sys, dy, 0);
  return 0.5 * sig.eps.tail(dy.size() - burn_in).squaredNorm();
}

bool is_stable_pair(const SystemParams& sys) {
  return check_stability(sys.ar, sys.rho_stab).stable &&
         check_stability(sys.ma, sys.rho_stab).stable;
}

// Solve the normal equations of a small least-squares problem.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

}  // namespace

PeCost pe_cost(const SystemParams& sys, const Eigen::VectorXd& dy, Eigen::Index burn_in) {
  require_stable(sys);
  if (burn_in < 0 || burn_in >= dy.size()) {
    throw ConfigError("pe_cost: burn_in must be in [0, N)");
  }
  return evaluate(sys, dy, burn_in, false).cost;
}

SystemParams long_ar_initial(const Eigen::VectorXd& dy, Eigen::Index n_ar, Eigen::Index n_ma,
                             const PeOptions& opts) {
  const Eigen::Index n = dy.size();
  SystemParams out;
  out.rho_stab = opts.rho_stab;
  out.ar = Eigen::VectorXd::Zero(n_ar);
  out.ma = Eigen::VectorXd::Zero(n_ma);
  if (n_ar + n_ma == 0) return out;

  const auto lagged_fit = [&](Eigen::Index order, const Eigen::VectorXd& resid_src,
                              Eigen::Index n_resid, Eigen::Index start) {
    const Eigen::Index rows = n - start;
    Eigen::MatrixXd x(rows, order + n_resid);
    for (Eigen::Index t = start; t < n; ++t) {
      for (Eigen::Index i = 0; i < order; ++i) x(t - start, i) = -dy[t - i - 1];
      for (Eigen::Index j = 0; j < n_resid; ++j) x(t - start, order + j) = resid_src[t - j - 1];
    }
    return least_squares(x, dy.tail(rows));
  };

  if (n_ma == 0) {
    if (n <= 2 * n_ar + 1) throw ConfigError("long_ar_initial: too few samples");
    out.ar = lagged_fit(n_ar, Eigen::VectorXd(), 0, n_ar);
    return project_stable(out);
  }

  const Eigen::Index order = std::max<Eigen::Index>(
      std::min<Eigen::Index>(opts.long_ar_order, n / 10), n_ar + n_ma + 1);
  if (n <= 4 * order) throw ConfigError("long_ar_initial: too few samples for long AR fit");
  const Eigen::VectorXd long_ar = lagged_fit(order, Eigen::VectorXd(), 0, order);
  Eigen::VectorXd resid = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = order; t < n; ++t) {
    double r = dy[t];
    for (Eigen::Index i = 0; i < order; ++i) r += long_ar[i] * dy[t - i - 1];
    resid[t] = r;
  }
  const Eigen::VectorXd coef = lagged_fit(n_ar, resid, n_ma, order + std::max(n_ar, n_ma));
  out.ar = coef.head(n_ar);
  out.ma = coef.tail(n_ma);
  return project_stable(out);
}

PeResult pe_estimate(const Eigen::VectorXd& dy, const SystemParams& init, const PeOptions& opts) {
  require_stable(init);
  require_inverse_stable(init);
  const Eigen::Index n = dy.size();
  const Eigen::Index p = init.dim();
  if (opts.burn_in < 0 || n - opts.burn_in <= 10 * p || n <= 10 * p) {
    throw ConfigError("pe_estimate: need N - burn_in > 10 p (N = " + std::to_string(n) +
                      ", burn_in = " + std::to_string(opts.burn_in) +
                      ", p = " + std::to_string(p) + ")");
  }

  SystemParams sys = init;
  sys.rho_stab = opts.rho_stab;
  PeResult res;
  const double g_tol = opts.tol_g * static_cast<double>(n);

  Evaluation ev = evaluate(sys, dy, opts.burn_in, true);
  for (res.iterations = 0; res.iterations < opts.max_iter && p > 0; ++res.iterations) {
    const Eigen::VectorXd& g = ev.cost.grad;
    if (g.lpNorm<Eigen::Infinity>() == 0.0) break;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd dir = -ldlt.solve(g);
    if (!dir.allFinite()) break;
    const double slope = g.dot(dir);

    const Eigen::VectorXd theta = sys.theta();
    double alpha = 1.0;
    bool accepted = false;
    SystemParams trial;
    for (int k = 0; k < kMaxHalvings; ++k, alpha *= 0.5) {
      trial = project_stable(sys.with_theta(theta + alpha * dir));
      if (!is_stable_pair(trial)) continue;
      const double c = cost_only(trial, dy, opts.burn_in);
      if (c <= ev.cost.value + kArmijo * alpha * slope + rounding_slack(ev.cost.value)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double step = (trial.theta() - theta).lpNorm<Eigen::Infinity>();
    sys = trial;
    ev = evaluate(sys, dy, opts.burn_in, true);
    // Keep polishing past the gradient test; stop once steps hit rounding level.
    if (step <= 1e-13 * (1.0 + theta.lpNorm<Eigen::Infinity>()) &&
        ev.cost.grad.lpNorm<Eigen::Infinity>() < g_tol) {
      ++res.iterations;
      break;
    }
  }

  const double used = static_cast<double>(n - opts.burn_in);
  res.theta_hat = sys.theta();
  res.cost = ev.cost.value;
  res.grad = ev.cost.grad;
  res.converged = p == 0 || ev.cost.grad.lpNorm<Eigen::Infinity>() < g_tol;
  res.r_p_star = ev.info / used;
  res.sigma2_hat = ev.sum_sq / used;
  if (p == 0) {
    res.sigma_p = Eigen::MatrixXd(0, 0);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.r_p_star);
    const double max_ev = es.eigenvalues().maxCoeff();
    if (max_ev > 0.0 && es.eigenvalues().minCoeff() > 1e-10 * max_ev) {
      res.sigma_p = res.sigma2_hat * res.r_p_star.inverse();
    } else {
      res.sigma_p = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
    }
  }
  return res;
}

Eigen::MatrixXd r_p_star_exact(const SystemParams& sys, double noise_variance,
                               Eigen::Index horizon) {
  const Eigen::Index p = sys.dim();
  if (p == 0) return Eigen::MatrixXd(0, 0);
  if (horizon <= 0) {
    double rmax = 0.0;
    for (const auto* poly : {&sys.ar, &sys.ma}) {
      for (const auto& r : check_stability(*poly, 0.0).roots) rmax = std::max(rmax, std::abs(r));
    }
    const double decay = rmax > 1e-3 ? -std::log(rmax) : 7.0;
    horizon = std::max<Eigen::Index>(200, static_cast<Eigen::Index>(80.0 / decay) + 4 * p + 50);
  }
  Eigen::VectorXd impulse = Eigen::VectorXd::Zero(horizon);
  impulse[0] = 1.0;
  const auto sig = innovations(sys, simulate(sys, impulse), 1);
  return noise_variance * sig.eps_grad.transpose() * sig.eps_grad;
}

}  // namespace levy_sysid
