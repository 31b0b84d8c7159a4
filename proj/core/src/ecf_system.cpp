#include "levy_sysid/ecf_system.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

namespace {

using cplx = std::complex<double>;
constexpr cplx kI{0.0, 1.0};
constexpr double kArmijo = 1e-4;

// Near the optimum the predicted decrease can fall below the rounding error of
// the cost itself; allow that much slack in the sufficient-decrease test.
double rounding_slack(double cost) {
  return 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cost);
}

constexpr int kMaxHalvings = 40;
constexpr double kEndgameStep = 1e-6;  // relative GN step below which plain steps are allowed

// On a conjugate-closed grid (u_{h-1-k} = -u_{h+k}) every moment at -u is the
// conjugate of the one at u, so only the positive half is accumulated. When
// that half is u_h * (1, 2, ..., h) the exponentials are successive powers.
struct ExpLayout {
  Eigen::Index first = 0;   // index of the first explicitly computed frequency
  Eigen::Index count = 0;   // number of explicitly computed frequencies
  bool mirrored = false;
  bool arithmetic = false;
};

ExpLayout analyze(const Eigen::VectorXd& u) {
  const Eigen::Index m = u.size();
  ExpLayout out{0, m, false, false};
  if (m % 2 != 0) return out;
  const Eigen::Index h = m / 2;
  for (Eigen::Index k = 0; k < h; ++k) {
    if (u[h + k] != -u[h - 1 - k]) return out;
  }
  out = {h, h, true, true};
  for (Eigen::Index k = 0; k < h; ++k) {
    if (std::abs(u[h + k] - static_cast<double>(k + 1) * u[h]) > 1e-12 * u[m - 1]) {
      out.arithmetic = false;
      break;
    }
  }
  return out;
}

// Sample averages needed by the stage-3 cost and its derivatives.
//   hbar  M x q         q = p (Sensitivity) or 1 (Plain)
//   a     M x (q p)     column j*p + l: mean of i u_k e_k d(score_j)/d theta_l, first-order part
//   b     M x (q p)     column j*p + l: mean of (e_k - cf_k) eps_theta_theta(j, l)  (Sensitivity only)
struct Moments3 {
  Eigen::MatrixXcd hbar;
  Eigen::MatrixXcd a;
  Eigen::MatrixXcd b;
};

// Accumulates in one pass over n with real arithmetic; the summation order is
// fixed so results do not depend on threading.
Moments3 accumulate(const Eigen::VectorXd& dy, const SystemParams& sys,
                    const Eigen::VectorXcd& phi, const Eigen::VectorXd& u, Eigen::Index burn_in,
                    ScoreVariant variant, int order) {
  const auto sig = innovations(sys, dy, std::max(order, 1));
  const Eigen::Index n = dy.size(), m = u.size(), p = sys.dim();
  const bool sens = variant == ScoreVariant::Sensitivity;
  const Eigen::Index q = sens ? p : 1;
  const bool want_a = order >= 1;
  const bool want_b = order >= 2 && sens;
  const ExpLayout lay = analyze(u);
  const Eigen::Index mk = lay.count, na = q * p, nb = p * p;

  // Row-major accumulators over the computed frequencies, real and imaginary parts.
  Eigen::MatrixXd hr = Eigen::MatrixXd::Zero(q, mk), hi = hr;
  Eigen::MatrixXd ar = Eigen::MatrixXd::Zero(want_a ? na : 0, mk), ai = ar;
  Eigen::MatrixXd br = Eigen::MatrixXd::Zero(want_b ? nb : 0, mk), bi = br;
  std::vector<double> er(static_cast<std::size_t>(mk)), ei(er);
  std::vector<double> w(static_cast<std::size_t>(na));
  Eigen::VectorXd g(p), hess(nb);
  const Eigen::VectorXd uk = u.segment(lay.first, mk);
  const Eigen::VectorXd phr = phi.real().segment(lay.first, mk);
  const Eigen::VectorXd phi_i = phi.imag().segment(lay.first, mk);

  for (Eigen::Index t = burn_in; t < n; ++t) {
    const double eps = sig.eps[t];
    if (lay.arithmetic) {
      const double c = std::cos(uk[0] * eps), s = std::sin(uk[0] * eps);
      double cr = c, ci = s;
      for (Eigen::Index k = 0; k < mk; ++k) {
        if (k > 0) {
          const double nr = cr * c - ci * s;
          ci = cr * s + ci * c;
          cr = nr;
        }
        er[static_cast<std::size_t>(k)] = cr;
        ei[static_cast<std::size_t>(k)] = ci;
      }
    } else {
      for (Eigen::Index k = 0; k < mk; ++k) {
        er[static_cast<std::size_t>(k)] = std::cos(uk[k] * eps);
        ei[static_cast<std::size_t>(k)] = std::sin(uk[k] * eps);
      }
    }
    g = sig.eps_grad.row(t).transpose();
    if (want_b) hess = sig.eps_hess.row(t).transpose();
    if (want_a) {
      for (Eigen::Index j = 0; j < q; ++j)
        for (Eigen::Index l = 0; l < p; ++l)
          w[static_cast<std::size_t>(j * p + l)] = sens ? g[j] * g[l] : g[l];
    }
    for (Eigen::Index k = 0; k < mk; ++k) {
      const double ekr = er[static_cast<std::size_t>(k)], eki = ei[static_cast<std::size_t>(k)];
      const double dr = ekr - phr[k], di = eki - phi_i[k];
      if (sens) {
        for (Eigen::Index j = 0; j < q; ++j) {
          hr(j, k) += dr * g[j];
          hi(j, k) += di * g[j];
        }
      } else {
        hr(0, k) += dr;
        hi(0, k) += di;
      }
      if (want_a) {
        // i u e = u (-Im e, Re e)
        const double iur = -uk[k] * eki, iui = uk[k] * ekr;
        for (Eigen::Index c = 0; c < na; ++c) {
          ar(c, k) += iur * w[static_cast<std::size_t>(c)];
          ai(c, k) += iui * w[static_cast<std::size_t>(c)];
        }
      }
      if (want_b) {
        for (Eigen::Index c = 0; c < nb; ++c) {
          br(c, k) += dr * hess[c];
          bi(c, k) += di * hess[c];
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(n - burn_in);
  const auto expand = [&](const Eigen::MatrixXd& re, const Eigen::MatrixXd& im) {
    Eigen::MatrixXcd out(m, re.rows());
    for (Eigen::Index k = 0; k < mk; ++k) {
      for (Eigen::Index c = 0; c < re.rows(); ++c) {
        const cplx v(re(c, k) * inv, im(c, k) * inv);
        out(lay.first + k, c) = v;
        if (lay.mirrored) out(lay.first - 1 - k, c) = std::conj(v);
      }
    }
    return out;
  };
  Moments3 mom;
  mom.hbar = expand(hr, hi);
  if (want_a) mom.a = expand(ar, ai);
  if (want_b) mom.b = expand(br, bi);
  return mom;
}

// Jacobian column l laid out as an M x q block matrix.
Eigen::MatrixXcd jac_block(const Moments3& mom, Eigen::Index l, Eigen::Index p, Eigen::Index q,
                           bool full) {
  Eigen::MatrixXcd out(mom.hbar.rows(), q);
  for (Eigen::Index j = 0; j < q; ++j) {
    out.col(j) = mom.a.col(j * p + l);
    if (full && mom.b.size() > 0) out.col(j) += mom.b.col(j * p + l);
  }
  return out;
}

Eigen::VectorXcd model_cf(const NoiseParams& model, const FrequencyGrid& grid) {
  Eigen::VectorXcd out(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) out[k] = cf(model, grid[k]);
  return out;
}

struct Problem {
  const Eigen::VectorXd& dy;
  FrequencyGrid grid;
  Eigen::VectorXcd phi;
  KroneckerInverse kinv;
  ScoreVariant variant;
  Eigen::Index burn_in;

  double cost(const SystemParams& sys) const {
    const auto mom = accumulate(dy, sys, phi, grid.points(), burn_in, variant, 0);
    return kinv.inner(mom.hbar, mom.hbar);
  }

  struct Step {
    double cost = 0.0;
    Eigen::VectorXd grad;  // Re J_full^* K^{-1} hbar (half the cost gradient)
    Eigen::MatrixXd gn;    // Re J_gn^* K^{-1} J_gn
  };

  Step linearize(const SystemParams& sys) const {
    const Eigen::Index p = sys.dim();
    const bool sens = variant == ScoreVariant::Sensitivity;
    const Eigen::Index q = sens ? p : 1;
    const auto mom = accumulate(dy, sys, phi, grid.points(), burn_in, variant, sens ? 2 : 1);
    Step s;
    s.cost = kinv.inner(mom.hbar, mom.hbar);
    s.grad.resize(p);
    s.gn.resize(p, p);
    std::vector<Eigen::MatrixXcd> gn_cols, full_cols;
    for (Eigen::Index l = 0; l < p; ++l) {
      gn_cols.push_back(jac_block(mom, l, p, q, false));
      full_cols.push_back(jac_block(mom, l, p, q, true));
    }
    for (Eigen::Index l = 0; l < p; ++l) {
      s.grad[l] = kinv.inner(full_cols[static_cast<std::size_t>(l)], mom.hbar);
      for (Eigen::Index k = 0; k <= l; ++k) {
        s.gn(l, k) = s.gn(k, l) =
            kinv.inner(gn_cols[static_cast<std::size_t>(l)], gn_cols[static_cast<std::size_t>(k)]);
      }
    }
    return s;
  }
};

Problem make_problem(const Eigen::VectorXd& dy, const SystemParams& theta, const NoiseParams& eta,
                     const FrequencyGrid& grid, const Eigen::MatrixXd& r_p_star,
                     const Stage3Options& opts) {
  validate(eta);
  const Eigen::Index p = theta.dim();
  if (p == 0) throw ConfigError("stage 3: system has no parameters (p = 0)");
  if (opts.burn_in < 0 || opts.burn_in >= dy.size()) {
    throw ConfigError("stage 3: burn_in must be in [0, N)");
  }
  FrequencyGrid closed = grid.conjugate_closure();
  const Eigen::MatrixXcd c_reg = regularize(c_matrix(eta, closed), opts.tau);
  const bool sens = opts.score == ScoreVariant::Sensitivity;
  if (sens && (r_p_star.rows() != p || r_p_star.cols() != p)) {
    throw ConfigError("stage 3: R_P* must be " + std::to_string(p) + " x " + std::to_string(p));
  }
  const Eigen::MatrixXd r = sens ? r_p_star : Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXcd phi = model_cf(eta, closed);
  return Problem{dy, closed, std::move(phi), KroneckerInverse(c_reg, r), opts.score, opts.burn_in};
}

}  // namespace

Stage3Scores stage3_scores(const Eigen::VectorXd& dy, const SystemParams& theta,
                           const NoiseParams& eta, const FrequencyGrid& grid,
                           Eigen::Index burn_in) {
  const Eigen::Index p = theta.dim();
  if (p == 0) throw ConfigError("stage3_scores: system has no parameters (p = 0)");
  if (burn_in < 0 || burn_in >= dy.size()) throw ConfigError("stage3_scores: bad burn_in");
  const auto sig = innovations(theta, dy, 1);
  const Eigen::VectorXcd phi = model_cf(eta, grid);
  const Eigen::Index m = grid.size(), rows = dy.size() - burn_in;
  Stage3Scores out;
  out.per_sample.resize(rows, m * p);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const Eigen::Index n = burn_in + t;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double arg = grid[k] * sig.eps[n];
      const cplx dk = cplx(std::cos(arg), std::sin(arg)) - phi[k];
      for (Eigen::Index j = 0; j < p; ++j) out.per_sample(t, k * p + j) = dk * sig.eps_grad(n, j);
    }
  }
  out.mean = out.per_sample.colwise().mean().transpose();
  return out;
}

Eigen::MatrixXcd stage3_jacobian(const Eigen::VectorXd& dy, const SystemParams& theta,
                                 const NoiseParams& eta, const FrequencyGrid& grid,
                                 Eigen::Index burn_in, bool full) {
  const Eigen::Index p = theta.dim(), m = grid.size();
  if (p == 0) throw ConfigError("stage3_jacobian: system has no parameters (p = 0)");
  const auto mom = accumulate(dy, theta, model_cf(eta, grid), grid.points(), burn_in,
                              ScoreVariant::Sensitivity, full ? 2 : 1);
  Eigen::MatrixXcd jac(m * p, p);
  for (Eigen::Index l = 0; l < p; ++l) {
    const Eigen::MatrixXcd blk = jac_block(mom, l, p, p, full);
    for (Eigen::Index k = 0; k < m; ++k)
      for (Eigen::Index j = 0; j < p; ++j) jac(k * p + j, l) = blk(k, j);
  }
  return jac;
}

Eigen::MatrixXcd kronecker_weight(const Eigen::MatrixXcd& c, const Eigen::MatrixXd& r_p) {
  if (c.rows() != c.cols() || r_p.rows() != r_p.cols()) {
    throw ConfigError("kronecker_weight: factors must be square");
  }
  const Eigen::Index m = c.rows(), p = r_p.rows();
  Eigen::MatrixXcd k(m * p, m * p);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) k.block(a * p, b * p, p, p) = c(a, b) * r_p.cast<cplx>();
  return k;
}

KroneckerInverse::KroneckerInverse(const Eigen::MatrixXcd& c, const Eigen::MatrixXd& r_p)
    : m_(c.rows()), p_(r_p.rows()), c_(c, "C matrix"), r_(r_p) {
  if (c.rows() != c.cols() || r_p.rows() != r_p.cols()) {
    throw ConfigError("KroneckerInverse: factors must be square");
  }
  if (r_.info() != Eigen::Success || !r_p.allFinite()) {
    throw NumericalError("R_P* is not positive definite");
  }
}

Eigen::MatrixXcd KroneckerInverse::apply(const Eigen::MatrixXcd& blocks) const {
  if (blocks.rows() != m_ || blocks.cols() != p_) {
    throw ConfigError("KroneckerInverse::apply: expected " + std::to_string(m_) + " x " +
                      std::to_string(p_) + " blocks");
  }
  const Eigen::MatrixXcd left = c_.solve(blocks);  // C^{-1} H
  // (C^{-1} H) R^{-1}, R symmetric real
  const Eigen::MatrixXd rinv = r_.solve(Eigen::MatrixXd::Identity(p_, p_));
  return left * rinv.cast<cplx>();
}

Eigen::VectorXcd KroneckerInverse::apply(const Eigen::VectorXcd& stacked) const {
  if (stacked.size() != m_ * p_) throw ConfigError("KroneckerInverse::apply: size mismatch");
  Eigen::MatrixXcd blocks(m_, p_);
  for (Eigen::Index k = 0; k < m_; ++k)
    for (Eigen::Index j = 0; j < p_; ++j) blocks(k, j) = stacked[k * p_ + j];
  const Eigen::MatrixXcd res = apply(blocks);
  Eigen::VectorXcd out(m_ * p_);
  for (Eigen::Index k = 0; k < m_; ++k)
    for (Eigen::Index j = 0; j < p_; ++j) out[k * p_ + j] = res(k, j);
  return out;
}

double KroneckerInverse::inner(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) const {
  return (a.conjugate().cwiseProduct(apply(b))).sum().real();
}

Eigen::MatrixXcd KroneckerInverse::dense() const {
  const Eigen::MatrixXcd cinv = c_.solve(Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(m_, m_)));
  const Eigen::MatrixXd rinv = r_.solve(Eigen::MatrixXd::Identity(p_, p_));
  return kronecker_weight(cinv, rinv);
}

Stage3Result stage3_estimate(const Eigen::VectorXd& dy, const SystemParams& theta_init,
                             const NoiseParams& eta_hat, const FrequencyGrid& grid,
                             const Eigen::MatrixXd& r_p_star, const Stage3Options& opts) {
  require_stable(theta_init);
  require_inverse_stable(theta_init);
  const Problem prob = make_problem(dy, theta_init, eta_hat, grid, r_p_star, opts);

  Stage3Result res{.theta_hat2 = theta_init.theta(), .grid = prob.grid};
  SystemParams sys = theta_init;
  double last_step = std::numeric_limits<double>::infinity();
  double endgame_step = std::numeric_limits<double>::infinity();
  bool stalled = false;
  Problem::Step lin = prob.linearize(sys);

  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(lin.gn);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      stalled = true;
      break;
    }
    const Eigen::VectorXd dir = -ldlt.solve(lin.grad);
    if (!dir.allFinite()) {
      stalled = true;
      break;
    }
    last_step = dir.lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd theta = sys.theta();
    const double scale = 1.0 + theta.lpNorm<Eigen::Infinity>();
    if (last_step <= 1e-13 * scale) break;

    const double slope = 2.0 * lin.grad.dot(dir);
    double alpha = 1.0;
    bool accepted = false;
    SystemParams trial;
    for (int k = 0; k < kMaxHalvings && alpha * last_step > 1e-13 * scale; ++k, alpha *= 0.5) {
      trial = project_stable(sys.with_theta(theta + alpha * dir));
      if (!check_stability(trial.ar, trial.rho_stab).stable ||
          !check_stability(trial.ma, trial.rho_stab).stable) {
        continue;
      }
      if (prob.cost(trial) <= lin.cost + kArmijo * alpha * slope + rounding_slack(lin.cost)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // The cost sums N M terms and is noisy at a level the rounding slack
      // does not cover. Once the step is tiny, keep taking plain GN steps
      // while they contract; stop as soon as one fails to shrink.
      if (last_step <= opts.step_tol * scale) break;
      const SystemParams plain = sys.with_theta(theta + dir);
      if (last_step > kEndgameStep * scale || last_step >= endgame_step ||
          !check_stability(plain.ar, plain.rho_stab).stable ||
          !check_stability(plain.ma, plain.rho_stab).stable) {
        break;
      }
      endgame_step = last_step;
      trial = plain;
      alpha = 1.0;
    }
    sys = trial;
    lin = prob.linearize(sys);
    if (alpha * last_step <= 1e-13 * scale) {
      ++res.iterations;
      break;
    }
  }

  res.theta_hat2 = sys.theta();
  res.cost = lin.cost;
  res.grad = lin.grad;
  res.converged = !stalled && last_step <= opts.step_tol * (1.0 + res.theta_hat2.lpNorm<Eigen::Infinity>());

  res.psi = psi_vector(eta_hat, prob.grid);
  const HermitianFactor cfac(regularize(c_matrix(eta_hat, prob.grid), opts.tau), "C matrix");
  const cplx form = res.psi.dot(cfac.solve(res.psi));
  res.kappa = form.real();
  res.kappa_imag = form.imag();
  if (!(res.kappa > 0.0)) throw NumericalError("stage 3: psi^* C^{-1} psi is not positive");
  if (opts.score == ScoreVariant::Sensitivity) {
    res.avar_stage3 = spd_inverse_or_nan(r_p_star) / res.kappa;
  } else {
    res.avar_stage3 = Eigen::MatrixXd::Constant(theta_init.dim(), theta_init.dim(),
                                                std::numeric_limits<double>::quiet_NaN());
  }
  res.efficiency_ratio_vs_pe = res.kappa * moments(eta_hat).variance;
  return res;
}

Eigen::VectorXd stage3_gn_step(const Eigen::VectorXd& dy, const SystemParams& theta,
                               const NoiseParams& eta, const FrequencyGrid& grid,
                               const Eigen::MatrixXd& r_p_star, const Stage3Options& opts) {
  const Problem prob = make_problem(dy, theta, eta, grid, r_p_star, opts);
  const auto lin = prob.linearize(theta);
  return -lin.gn.ldlt().solve(lin.grad);
}

Eigen::VectorXcd psi_vector(const NoiseParams& model, const FrequencyGrid& grid) {
  Eigen::VectorXcd psi(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) psi[k] = kI * grid[k] * cf(model, grid[k]);
  return psi;
}

double kappa(const NoiseParams& model, const FrequencyGrid& grid, double tau, bool relative_ridge) {
  Eigen::MatrixXcd c = c_matrix(model, grid);
  if (relative_ridge) {
    c = regularize(c, tau);
  } else {
    c.diagonal().array() += tau;
  }
  const HermitianFactor fac(c, "C matrix");
  return fac.inverse_form(psi_vector(model, grid));
}

double fisher_location(const NoiseParams& model) {
  if (!density(model, 0.0)) {
    throw UnsupportedError("fisher_location: no density available for " +
                           std::string(to_string(model.kind)));
  }
  double sd_min = 0.0, sd_max = 0.0;
  if (model.kind == NoiseKind::GaussianIid) {
    sd_min = sd_max = model.eta[0] * std::sqrt(model.h);
  } else {
    sd_min = std::min(model.eta[1], model.eta[2]) * std::sqrt(model.h);
    sd_max = std::max(model.eta[1], model.eta[2]) * std::sqrt(model.h);
  }
  const auto integrand = [&](double x) {
    const double f = *density(model, x);
    if (!(f > 0.0)) return 0.0;
    const double fp = *density_derivative(model, x);
    return fp * fp / f;
  };
  std::vector<double> cuts{0.0, sd_min, 3.0 * sd_min, 8.0 * sd_min, 3.0 * sd_max, 8.0 * sd_max,
                           40.0 * sd_max};
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    for (const double sign : {1.0, -1.0}) {
      const double a = sign * cuts[i], b = sign * cuts[i + 1];
      const double piece = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          integrand, std::min(a, b), std::max(a, b), 15, 1e-12);
      total += piece;
    }
  }
  return total;
}

KappaSeries continuum_limit_kappa(const NoiseParams& model,
                                  const std::vector<Eigen::Index>& m_values, double tau) {
  KappaSeries out;
  out.u_max = cf_decay_frequency(model);
  std::vector<double> values;
  for (const Eigen::Index m : m_values) {
    double k = 0.0;
    try {
      k = kappa(model, linear_grid(out.u_max, m).conjugate_closure(), tau, false);
    } catch (const NumericalError&) {
      out.ill_conditioned = true;
      break;
    }
    if (!std::isfinite(k) || (!values.empty() && k < values.back() * (1.0 - 1e-6))) {
      out.ill_conditioned = true;
      break;
    }
    out.m_values.push_back(m);
    values.push_back(k);
  }
  out.kappa = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

}  // namespace levy_sysid
