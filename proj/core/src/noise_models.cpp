#include "levy_sysid/noise_models.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

namespace {

using cplx = std::complex<double>;
constexpr cplx kI{0.0, 1.0};
constexpr double kPi = std::numbers::pi;

// Y in (0,1) u (1,2), with a guard band around the pole of Gamma(-Y) at 1.
constexpr double kCgmyYGuard = 1e-3;
// Y-derivative of the CGMY exponent cancels catastrophically near 0 and 1.
constexpr double kCgmyGradGuard = 1e-2;

const std::array<std::vector<std::string>, 5> kParamNames = {{
    {"sigma"},
    {"w", "sigma1", "sigma2"},
    {"lambda", "jump_mean", "jump_sd"},
    {"sigma", "nu", "theta"},
    {"C", "G", "M", "Y"},
}};

std::size_t index_of(NoiseKind kind) { return static_cast<std::size_t>(kind); }

[[noreturn]] void domain_fail(NoiseKind kind, std::string_view name, double value,
                              std::string_view rule) {
  throw DomainError(std::string(to_string(kind)) + ": parameter '" + std::string(name) +
                    "' = " + std::to_string(value) + " violates " + std::string(rule));
}

// Gamma(-y) through the reflection formula Gamma(z)Gamma(1-z) = pi / sin(pi z).
double gamma_neg(double y) { return -kPi / (std::sin(kPi * y) * std::tgamma(1.0 + y)); }

// digamma(-y) through psi(1-z) - psi(z) = pi cot(pi z).
double digamma_neg(double y) { return boost::math::digamma(1.0 + y) + kPi / std::tan(kPi * y); }

double gauss_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * kPi * var);
}

// Mean of the uncentered CGMY increment per unit time: C Gamma(1-Y)(M^{Y-1} - G^{Y-1}).
double cgmy_mean_rate(double c, double g, double m, double y) {
  return c * std::tgamma(1.0 - y) * (std::pow(m, y - 1.0) - std::pow(g, y - 1.0));
}

// n-th cumulant of the centered VG increment (n >= 2), from the
// difference-of-gammas representation with shape h/nu and scales mu_p nu,
// mu_n nu.
double vg_cumulant(const NoiseParams& model, int n) {
  const double sigma = model.eta[0], nu = model.eta[1], theta = model.eta[2];
  const auto d = vg_derived_params(sigma, nu, theta);
  const double shape = model.h / nu;
  const double sp = d.mu_p * nu, sn = d.mu_n * nu;
  const double fact = std::tgamma(static_cast<double>(n));
  return shape * fact * (std::pow(sp, n) + ((n % 2 == 0) ? 1.0 : -1.0) * std::pow(sn, n));
}

double cgmy_cumulant(const NoiseParams& model, int n) {
  const double c = model.eta[0], g = model.eta[1], m = model.eta[2], y = model.eta[3];
  const double sign = (n % 2 == 0) ? 1.0 : -1.0;
  return model.h * c * std::tgamma(n - y) * (std::pow(m, y - n) + sign * std::pow(g, y - n));
}

}  // namespace

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::GaussianIid: return "GaussianIid";
    case NoiseKind::GaussianMixture: return "GaussianMixture";
    case NoiseKind::CompoundPoissonGaussian: return "CompoundPoissonGaussian";
    case NoiseKind::VarianceGamma: return "VarianceGamma";
    case NoiseKind::CgmyCfOnly: return "CgmyCfOnly";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(std::string_view name) {
  for (auto k : {NoiseKind::GaussianIid, NoiseKind::GaussianMixture,
                 NoiseKind::CompoundPoissonGaussian, NoiseKind::VarianceGamma,
                 NoiseKind::CgmyCfOnly}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

std::size_t parameter_count(NoiseKind kind) { return kParamNames[index_of(kind)].size(); }

const std::vector<std::string>& parameter_names(NoiseKind kind) {
  return kParamNames[index_of(kind)];
}

NoiseParams NoiseParams::gaussian(double sigma, double h) {
  return {NoiseKind::GaussianIid, Eigen::VectorXd::Constant(1, sigma), h};
}

NoiseParams NoiseParams::gaussian_mixture(double w, double sigma1, double sigma2, double h) {
  Eigen::VectorXd eta(3);
  eta << w, sigma1, sigma2;
  return {NoiseKind::GaussianMixture, eta, h};
}

NoiseParams NoiseParams::compound_poisson(double lambda, double jump_mean, double jump_sd,
                                          double h) {
  Eigen::VectorXd eta(3);
  eta << lambda, jump_mean, jump_sd;
  return {NoiseKind::CompoundPoissonGaussian, eta, h};
}

NoiseParams NoiseParams::variance_gamma(double sigma, double nu, double theta, double h) {
  Eigen::VectorXd eta(3);
  eta << sigma, nu, theta;
  return {NoiseKind::VarianceGamma, eta, h};
}

NoiseParams NoiseParams::cgmy(double c, double g, double m, double y, double h) {
  Eigen::VectorXd eta(4);
  eta << c, g, m, y;
  return {NoiseKind::CgmyCfOnly, eta, h};
}

NoiseParams NoiseParams::with_eta(const Eigen::VectorXd& new_eta) const {
  NoiseParams out = *this;
  out.eta = new_eta;
  return out;
}

void validate(const NoiseParams& model) {
  const auto& names = parameter_names(model.kind);
  if (static_cast<std::size_t>(model.eta.size()) != names.size()) {
    throw DomainError(std::string(to_string(model.kind)) + ": expected " +
                      std::to_string(names.size()) + " parameters, got " +
                      std::to_string(model.eta.size()));
  }
  if (!(model.h > 0.0) || !std::isfinite(model.h)) {
    domain_fail(model.kind, "h", model.h, "h > 0");
  }
  for (Eigen::Index i = 0; i < model.eta.size(); ++i) {
    if (!std::isfinite(model.eta[i])) {
      domain_fail(model.kind, names[i], model.eta[i], "finiteness");
    }
  }
  const auto positive = [&](Eigen::Index i) {
    if (!(model.eta[i] > 0.0)) domain_fail(model.kind, names[i], model.eta[i], "> 0");
  };
  switch (model.kind) {
    case NoiseKind::GaussianIid:
      positive(0);
      break;
    case NoiseKind::GaussianMixture:
      if (!(model.eta[0] > 0.0 && model.eta[0] < 1.0)) {
        domain_fail(model.kind, names[0], model.eta[0], "0 < w < 1");
      }
      positive(1);
      positive(2);
      break;
    case NoiseKind::CompoundPoissonGaussian:
      positive(0);
      positive(2);
      break;
    case NoiseKind::VarianceGamma:
      positive(0);
      positive(1);
      break;
    case NoiseKind::CgmyCfOnly: {
      positive(0);
      positive(1);
      positive(2);
      const double y = model.eta[3];
      if (!(y > 0.0 && y < 2.0)) domain_fail(model.kind, names[3], y, "0 < Y < 2");
      if (std::abs(y - 1.0) < kCgmyYGuard) {
        domain_fail(model.kind, names[3], y, "|Y - 1| >= 1e-3");
      }
      break;
    }
  }
}

bool is_valid(const NoiseParams& model) noexcept {
  try {
    validate(model);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

bool near_boundary(const NoiseParams& model, double margin) noexcept {
  const auto& e = model.eta;
  switch (model.kind) {
    case NoiseKind::GaussianIid: return e[0] < margin;
    case NoiseKind::GaussianMixture:
      return e[0] < margin || e[0] > 1.0 - margin || e[1] < margin || e[2] < margin;
    case NoiseKind::CompoundPoissonGaussian: return e[0] < margin || e[2] < margin;
    case NoiseKind::VarianceGamma: return e[0] < margin || e[1] < margin;
    case NoiseKind::CgmyCfOnly:
      return e[0] < margin || e[1] < margin || e[2] < margin || e[3] < margin ||
             e[3] > 2.0 - margin || std::abs(e[3] - 1.0) < kCgmyYGuard + margin;
  }
  return false;
}

VgDerivedParams vg_derived_params(double sigma, double nu, double theta) {
  const double root = 0.5 * std::sqrt(theta * theta + 2.0 * sigma * sigma / nu);
  VgDerivedParams d;
  d.mu_p = root + 0.5 * theta;
  d.mu_n = root - 0.5 * theta;
  d.nu_p = d.mu_p * d.mu_p * nu;
  d.nu_n = d.mu_n * d.mu_n * nu;
  return d;
}

std::complex<double> cf(const NoiseParams& model, double u) {
  validate(model);
  if (!std::isfinite(u)) throw DomainError("cf: frequency must be finite");
  const auto& e = model.eta;
  const double h = model.h;
  switch (model.kind) {
    case NoiseKind::GaussianIid:
      return {std::exp(-0.5 * e[0] * e[0] * u * u * h), 0.0};
    case NoiseKind::GaussianMixture:
      return {e[0] * std::exp(-0.5 * e[1] * e[1] * u * u * h) +
                  (1.0 - e[0]) * std::exp(-0.5 * e[2] * e[2] * u * u * h),
              0.0};
    case NoiseKind::CompoundPoissonGaussian: {
      const double lambda = e[0], mj = e[1], sj = e[2];
      const cplx jump = std::exp(cplx(-0.5 * sj * sj * u * u, u * mj));
      return std::exp(lambda * h * (jump - 1.0) - kI * (u * lambda * h * mj));
    }
    case NoiseKind::VarianceGamma: {
      // (1 - i u theta nu + sigma^2 nu u^2 / 2)^(-h/nu) exp(-i u theta h)
      const double sigma = e[0], nu = e[1], theta = e[2];
      const cplx base(1.0 + 0.5 * sigma * sigma * nu * u * u, -u * theta * nu);
      return std::exp(-(h / nu) * std::log(base) - kI * (u * theta * h));
    }
    case NoiseKind::CgmyCfOnly: {
      const double c = e[0], g = e[1], m = e[2], y = e[3];
      const cplx bracket = std::pow(cplx(m, -u), y) - std::pow(m, y) +
                           std::pow(cplx(g, u), y) - std::pow(g, y);
      const cplx exponent = c * gamma_neg(y) * bracket;
      return std::exp(h * exponent - kI * (u * h * cgmy_mean_rate(c, g, m, y)));
    }
  }
  return {1.0, 0.0};
}

Eigen::VectorXcd cf_grad_eta(const NoiseParams& model, double u) {
  const cplx phi = cf(model, u);
  const auto& e = model.eta;
  const double h = model.h;
  const double u2 = u * u;
  Eigen::VectorXcd grad(e.size());
  switch (model.kind) {
    case NoiseKind::GaussianIid:
      grad[0] = -e[0] * u2 * h * phi;
      break;
    case NoiseKind::GaussianMixture: {
      const double e1 = std::exp(-0.5 * e[1] * e[1] * u2 * h);
      const double e2 = std::exp(-0.5 * e[2] * e[2] * u2 * h);
      grad[0] = e1 - e2;
      grad[1] = -e[0] * e[1] * u2 * h * e1;
      grad[2] = -(1.0 - e[0]) * e[2] * u2 * h * e2;
      break;
    }
    case NoiseKind::CompoundPoissonGaussian: {
      const double lambda = e[0], mj = e[1], sj = e[2];
      const cplx jump = std::exp(cplx(-0.5 * sj * sj * u2, u * mj));
      grad[0] = phi * (h * (jump - 1.0) - kI * (u * h * mj));
      grad[1] = phi * (lambda * h * kI * u * (jump - 1.0));
      grad[2] = phi * (-lambda * h * sj * u2 * jump);
      break;
    }
    case NoiseKind::VarianceGamma: {
      const double sigma = e[0], nu = e[1], theta = e[2];
      const cplx base(1.0 + 0.5 * sigma * sigma * nu * u2, -u * theta * nu);
      const cplx dbase_dnu(0.5 * sigma * sigma * u2, -u * theta);
      grad[0] = phi * (-h * sigma * u2 / base);
      grad[1] = phi * ((h / (nu * nu)) * std::log(base) - (h / nu) * dbase_dnu / base);
      grad[2] = phi * (kI * (u * h) / base - kI * (u * h));
      break;
    }
    case NoiseKind::CgmyCfOnly: {
      const double c = e[0], g = e[1], m = e[2], y = e[3];
      if (y < kCgmyGradGuard || std::abs(y - 1.0) < kCgmyGradGuard) {
        throw NumericalError("cf_grad_eta: CGMY Y = " + std::to_string(y) +
                             " is too close to a singular point of Gamma(-Y)");
      }
      const double gn = gamma_neg(y);
      const cplx mu_c(m, -u), gu_c(g, u);
      const cplx pm = std::pow(mu_c, y), pg = std::pow(gu_c, y);
      const double m_y = std::pow(m, y), g_y = std::pow(g, y);
      const cplx bracket = pm - m_y + pg - g_y;
      const double g1 = std::tgamma(1.0 - y);
      const double mean = cgmy_mean_rate(c, g, m, y);

      // d(log phi) = h d(exponent) - i u h d(mean)
      const cplx dlog_c = h * gn * bracket - kI * (u * h * mean / c);
      const cplx dlog_g =
          h * c * gn * y * (pg / gu_c - g_y / g) -
          kI * (u * h * (-c * g1 * (y - 1.0) * std::pow(g, y - 2.0)));
      const cplx dlog_m =
          h * c * gn * y * (pm / mu_c - m_y / m) -
          kI * (u * h * (c * g1 * (y - 1.0) * std::pow(m, y - 2.0)));
      const double dgn = -gn * digamma_neg(y);
      const cplx dbracket =
          pm * std::log(mu_c) - m_y * std::log(m) + pg * std::log(gu_c) - g_y * std::log(g);
      const double dg1 = -g1 * boost::math::digamma(1.0 - y);
      const double dmean =
          c * dg1 * (std::pow(m, y - 1.0) - std::pow(g, y - 1.0)) +
          c * g1 * (std::pow(m, y - 1.0) * std::log(m) - std::pow(g, y - 1.0) * std::log(g));
      const cplx dlog_y = h * c * (dgn * bracket + gn * dbracket) - kI * (u * h * dmean);
      grad[0] = phi * dlog_c;
      grad[1] = phi * dlog_g;
      grad[2] = phi * dlog_m;
      grad[3] = phi * dlog_y;
      break;
    }
  }
  return grad;
}

Eigen::VectorXd sample_increments(const NoiseParams& model, std::size_t n, std::uint64_t seed) {
  validate(model);
  if (model.kind == NoiseKind::CgmyCfOnly) {
    throw UnsupportedError("sample_increments: CgmyCfOnly has no sampler");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  const auto& e = model.eta;
  const double h = model.h;
  const double sqrt_h = std::sqrt(h);

  switch (model.kind) {
    case NoiseKind::GaussianIid:
      for (auto& x : out) x = e[0] * sqrt_h * normal(rng);
      break;
    case NoiseKind::GaussianMixture: {
      std::bernoulli_distribution first(e[0]);
      for (auto& x : out) {
        const double s = first(rng) ? e[1] : e[2];
        x = s * sqrt_h * normal(rng);
      }
      break;
    }
    case NoiseKind::CompoundPoissonGaussian: {
      const double lambda = e[0], mj = e[1], sj = e[2];
      std::poisson_distribution<long> count(lambda * h);
      const double shift = lambda * h * mj;
      for (auto& x : out) {
        const long k = count(rng);
        double sum = 0.0;
        if (k > 0) {
          const double kd = static_cast<double>(k);
          sum = kd * mj + sj * std::sqrt(kd) * normal(rng);
        }
        x = sum - shift;
      }
      break;
    }
    case NoiseKind::VarianceGamma: {
      const double sigma = e[0], nu = e[1], theta = e[2];
      const auto d = vg_derived_params(sigma, nu, theta);
      // gamma process with mean rate mu, variance rate v: shape mu^2 h / v, scale v / mu
      std::gamma_distribution<double> pos(d.mu_p * d.mu_p * h / d.nu_p, d.nu_p / d.mu_p);
      std::gamma_distribution<double> neg(d.mu_n * d.mu_n * h / d.nu_n, d.nu_n / d.mu_n);
      const double shift = theta * h;
      for (auto& x : out) {
        const double gp = pos(rng);
        const double gm = neg(rng);
        x = gp - gm - shift;
      }
      break;
    }
    case NoiseKind::CgmyCfOnly:
      break;
  }
  return out;
}

Moments moments(const NoiseParams& model) {
  validate(model);
  const auto& e = model.eta;
  const double h = model.h;
  Moments mom;
  switch (model.kind) {
    case NoiseKind::GaussianIid: {
      const double v = e[0] * e[0] * h;
      mom.variance = v;
      mom.abs_moment_4 = 3.0 * v * v;
      break;
    }
    case NoiseKind::GaussianMixture: {
      const double v1 = e[1] * e[1] * h, v2 = e[2] * e[2] * h;
      mom.variance = e[0] * v1 + (1.0 - e[0]) * v2;
      mom.abs_moment_4 = 3.0 * (e[0] * v1 * v1 + (1.0 - e[0]) * v2 * v2);
      break;
    }
    case NoiseKind::CompoundPoissonGaussian: {
      const double lambda = e[0], m = e[1], s = e[2];
      const double k2 = lambda * h * (m * m + s * s);
      const double k4 = lambda * h * (m * m * m * m + 6.0 * m * m * s * s + 3.0 * s * s * s * s);
      mom.variance = k2;
      mom.abs_moment_4 = k4 + 3.0 * k2 * k2;
      break;
    }
    case NoiseKind::VarianceGamma: {
      const double k2 = vg_cumulant(model, 2);
      mom.variance = k2;
      mom.abs_moment_4 = vg_cumulant(model, 4) + 3.0 * k2 * k2;
      break;
    }
    case NoiseKind::CgmyCfOnly: {
      const double k2 = cgmy_cumulant(model, 2);
      mom.variance = k2;
      mom.abs_moment_4 = cgmy_cumulant(model, 4) + 3.0 * k2 * k2;
      break;
    }
  }
  return mom;
}

std::optional<double> density(const NoiseParams& model, double x) {
  validate(model);
  const auto& e = model.eta;
  switch (model.kind) {
    case NoiseKind::GaussianIid:
      return gauss_pdf(x, e[0] * e[0] * model.h);
    case NoiseKind::GaussianMixture:
      return e[0] * gauss_pdf(x, e[1] * e[1] * model.h) +
             (1.0 - e[0]) * gauss_pdf(x, e[2] * e[2] * model.h);
    default:
      return std::nullopt;
  }
}

std::optional<double> density_derivative(const NoiseParams& model, double x) {
  validate(model);
  const auto& e = model.eta;
  switch (model.kind) {
    case NoiseKind::GaussianIid: {
      const double v = e[0] * e[0] * model.h;
      return -x / v * gauss_pdf(x, v);
    }
    case NoiseKind::GaussianMixture: {
      const double v1 = e[1] * e[1] * model.h, v2 = e[2] * e[2] * model.h;
      return -e[0] * x / v1 * gauss_pdf(x, v1) - (1.0 - e[0]) * x / v2 * gauss_pdf(x, v2);
    }
    default:
      return std::nullopt;
  }
}

}  // namespace levy_sysid
