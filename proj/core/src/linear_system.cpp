#include "levy_sysid/linear_system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

namespace {

// out_n = x_n - sum_j c_j out_{n-j}, i.e. out = (1/C(q^-1)) x.
Eigen::VectorXd inverse_ma_filter(const Eigen::VectorXd& c, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size(), pc = c.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double acc = x[t];
    const Eigen::Index lim = std::min(pc, t);
    for (Eigen::Index j = 0; j < lim; ++j) acc -= c[j] * out[t - j - 1];
    out[t] = acc;
  }
  return out;
}

}  // namespace

Eigen::VectorXd SystemParams::theta() const {
  Eigen::VectorXd t(dim());
  t << ar, ma;
  return t;
}

SystemParams SystemParams::with_theta(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim()) throw ConfigError("with_theta: dimension mismatch");
  SystemParams out = *this;
  out.ar = theta.head(ar.size());
  out.ma = theta.tail(ma.size());
  return out;
}

SystemParams SystemParams::from_theta(const Eigen::VectorXd& theta, Eigen::Index n_ar,
                                      double rho_stab) {
  if (n_ar < 0 || n_ar > theta.size()) throw ConfigError("from_theta: bad AR order");
  SystemParams out;
  out.ar = theta.head(n_ar);
  out.ma = theta.tail(theta.size() - n_ar);
  out.rho_stab = rho_stab;
  return out;
}

Eigen::MatrixXd SignalBundle::hessian_at(Eigen::Index n) const {
  const Eigen::Index p = eps_grad.cols();
  Eigen::MatrixXd h(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) h(i, j) = eps_hess(n, i * p + j);
  return h;
}

StabilityReport check_stability(const Eigen::VectorXd& poly, double rho_stab) {
  StabilityReport rep;
  const Eigen::Index p = poly.size();
  if (p == 0) return rep;
  if (p == 1) {
    rep.roots.emplace_back(-poly[0], 0.0);
  } else {
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
    companion.row(0) = -poly.transpose();
    companion.diagonal(-1).setOnes();
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    const auto ev = es.eigenvalues();
    rep.roots.assign(ev.data(), ev.data() + ev.size());
  }
  double max_mod = 0.0;
  for (const auto& r : rep.roots) max_mod = std::max(max_mod, std::abs(r));
  rep.margin = 1.0 - max_mod;
  rep.stable = max_mod < 1.0 - rho_stab;
  return rep;
}

void require_stable(const SystemParams& sys) {
  const auto rep = check_stability(sys.ar, sys.rho_stab);
  if (!rep.stable) {
    std::ostringstream os;
    os << "AR polynomial is not stable (root moduli:";
    for (const auto& r : rep.roots) os << ' ' << std::abs(r);
    os << "; required < " << 1.0 - sys.rho_stab << ")";
    throw StabilityError(os.str());
  }
}

void require_inverse_stable(const SystemParams& sys) {
  const auto rep = check_stability(sys.ma, sys.rho_stab);
  if (!rep.stable) {
    std::ostringstream os;
    os << "MA polynomial is not stable, inverse filter diverges (root moduli:";
    for (const auto& r : rep.roots) os << ' ' << std::abs(r);
    os << "; required < " << 1.0 - sys.rho_stab << ")";
    throw StabilityError(os.str());
  }
}

Eigen::VectorXd simulate(const SystemParams& sys, const Eigen::VectorXd& noise) {
  require_stable(sys);
  if (noise.size() < 1) throw ConfigError("simulate: empty noise sequence");
  const Eigen::Index n = noise.size(), pa = sys.ar.size(), pc = sys.ma.size();
  Eigen::VectorXd y(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    // Same summation order as the inverse recursion in innovations().
    double s = 0.0;
    for (Eigen::Index j = 0; j < std::min(pc, t); ++j) s += sys.ma[j] * noise[t - j - 1];
    for (Eigen::Index i = 0; i < std::min(pa, t); ++i) s -= sys.ar[i] * y[t - i - 1];
    y[t] = noise[t] + s;
  }
  return y;
}

SignalBundle innovations(const SystemParams& sys, const Eigen::VectorXd& dy, int order) {
  if (order < 0 || order > 2) throw ConfigError("innovations: order must be 0, 1 or 2");
  require_inverse_stable(sys);
  const Eigen::Index n = dy.size(), pa = sys.ar.size(), pc = sys.ma.size(), p = pa + pc;

  SignalBundle out;
  out.eps.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < std::min(pc, t); ++j) s += sys.ma[j] * out.eps[t - j - 1];
    for (Eigen::Index i = 0; i < std::min(pa, t); ++i) s -= sys.ar[i] * dy[t - i - 1];
    out.eps[t] = dy[t] - s;
  }
  if (order == 0) return out;

  // C eps = A dy, hence
  //   d eps / d a_i =  q^-i (1/C) dy
  //   d eps / d c_j = -q^-j (1/C) eps
  const Eigen::VectorXd w = inverse_ma_filter(sys.ma, dy);
  const Eigen::VectorXd v = inverse_ma_filter(sys.ma, out.eps);
  out.eps_grad = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < pa; ++i) {
    const Eigen::Index lag = i + 1;
    if (lag < n) out.eps_grad.col(i).tail(n - lag) = w.head(n - lag);
  }
  for (Eigen::Index j = 0; j < pc; ++j) {
    const Eigen::Index lag = j + 1;
    if (lag < n) out.eps_grad.col(pa + j).tail(n - lag) = -v.head(n - lag);
  }
  if (order == 1) return out;

  //   d2 eps / d a_i d a_k = 0
  //   d2 eps / d a_i d c_j = -q^-(i+j) (1/C^2) dy
  //   d2 eps / d c_j d c_k = 2 q^-(j+k) (1/C^2) eps
  const Eigen::VectorXd w2 = inverse_ma_filter(sys.ma, w);
  const Eigen::VectorXd v2 = inverse_ma_filter(sys.ma, v);
  out.eps_hess = Eigen::MatrixXd::Zero(n, p * p);
  const auto fill = [&](Eigen::Index r, Eigen::Index c, Eigen::Index lag, const Eigen::VectorXd& src,
                        double scale) {
    if (lag >= n) return;
    out.eps_hess.col(r * p + c).tail(n - lag) = scale * src.head(n - lag);
    if (r != c) out.eps_hess.col(c * p + r).tail(n - lag) = scale * src.head(n - lag);
  };
  for (Eigen::Index i = 0; i < pa; ++i)
    for (Eigen::Index j = 0; j < pc; ++j) fill(i, pa + j, (i + 1) + (j + 1), w2, -1.0);
  for (Eigen::Index j = 0; j < pc; ++j)
    for (Eigen::Index k = j; k < pc; ++k) fill(pa + j, pa + k, (j + 1) + (k + 1), v2, 2.0);
  return out;
}

Eigen::VectorXd poly_from_roots(const std::vector<std::complex<double>>& roots) {
  // Coefficients of prod (z - r_k) = z^p + c_1 z^{p-1} + ... + c_p.
  std::vector<std::complex<double>> coeffs{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      next[k] += coeffs[k];
      next[k + 1] -= r * coeffs[k];
    }
    coeffs = std::move(next);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(roots.size()));
  for (Eigen::Index k = 0; k < out.size(); ++k) out[k] = coeffs[static_cast<std::size_t>(k) + 1].real();
  return out;
}

SystemParams project_stable(const SystemParams& sys) {
  const auto shrink = [&](const Eigen::VectorXd& poly) -> Eigen::VectorXd {
    auto rep = check_stability(poly, sys.rho_stab);
    if (rep.stable) return poly;
    const double limit = 1.0 - sys.rho_stab;
    const double target = 1.0 - 2.0 * sys.rho_stab;
    for (auto& r : rep.roots) {
      const double mod = std::abs(r);
      if (mod >= limit) r *= target / mod;
    }
    return poly_from_roots(rep.roots);
  };
  SystemParams out = sys;
  out.ar = shrink(sys.ar);
  out.ma = shrink(sys.ma);
  return out;
}

}  // namespace levy_sysid
