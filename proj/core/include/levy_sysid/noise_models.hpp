#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace levy_sysid {

/// Families of zero-mean i.i.d. increment laws with closed-form
/// characteristic functions.
///
/// Parameter vector layout per kind:
///   GaussianIid              (sigma)
///   GaussianMixture          (w, sigma1, sigma2), weights (w, 1 - w)
///   CompoundPoissonGaussian  (lambda, jump_mean, jump_sd)
///   VarianceGamma            (sigma, nu, theta)
///   CgmyCfOnly               (C, G, M, Y)
///
/// Every law is centered analytically: the increment over an interval of
/// length h has its mean subtracted, so E[dZ] = 0 for all kinds.
enum class NoiseKind {
  GaussianIid,
  GaussianMixture,
  CompoundPoissonGaussian,
  VarianceGamma,
  CgmyCfOnly,
};

std::string_view to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view name);

std::size_t parameter_count(NoiseKind kind);
const std::vector<std::string>& parameter_names(NoiseKind kind);

struct NoiseParams {
  NoiseKind kind = NoiseKind::GaussianIid;
  Eigen::VectorXd eta = Eigen::VectorXd::Ones(1);
  double h = 1.0;  // sampling interval

  static NoiseParams gaussian(double sigma, double h = 1.0);
  static NoiseParams gaussian_mixture(double w, double sigma1, double sigma2, double h = 1.0);
  static NoiseParams compound_poisson(double lambda, double jump_mean, double jump_sd,
                                      double h = 1.0);
  static NoiseParams variance_gamma(double sigma, double nu, double theta, double h = 1.0);
  static NoiseParams cgmy(double c, double g, double m, double y, double h = 1.0);

  NoiseParams with_eta(const Eigen::VectorXd& new_eta) const;
};

/// Throws DomainError naming the first offending parameter.
void validate(const NoiseParams& model);
bool is_valid(const NoiseParams& model) noexcept;

/// True when some parameter sits within `margin` of its domain boundary
/// (used to flag degenerate fits).
bool near_boundary(const NoiseParams& model, double margin = 1e-6) noexcept;

/// Characteristic function of the centered increment, E[exp(i u dZ)].
std::complex<double> cf(const NoiseParams& model, double u);

/// d cf / d eta, one complex entry per parameter.
Eigen::VectorXcd cf_grad_eta(const NoiseParams& model, double u);

/// n i.i.d. draws of the centered increment; deterministic in `seed`.
/// Throws UnsupportedError for CgmyCfOnly.
Eigen::VectorXd sample_increments(const NoiseParams& model, std::size_t n, std::uint64_t seed);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double abs_moment_4 = 0.0;
};

Moments moments(const NoiseParams& model);

/// Probability density, available for the Gaussian kinds only.
std::optional<double> density(const NoiseParams& model, double x);
std::optional<double> density_derivative(const NoiseParams& model, double x);

/// Gamma-process mean/variance rates of the positive and negative parts of a
/// VG process, X = gamma_p(mu_p, nu_p) - gamma_n(mu_n, nu_n).
struct VgDerivedParams {
  double mu_p = 0.0;
  double nu_p = 0.0;
  double mu_n = 0.0;
  double nu_n = 0.0;
};

VgDerivedParams vg_derived_params(double sigma, double nu, double theta);

}  // namespace levy_sysid
