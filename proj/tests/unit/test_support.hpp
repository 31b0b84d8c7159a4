#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "levy_sysid/linear_system.hpp"

namespace test_support {

// Central difference of a scalar function along coordinate i.
inline double central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, Eigen::Index i, double h) {
  Eigen::VectorXd xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

// Five-point stencil for complex-valued functions.
inline std::complex<double> five_point(
    const std::function<std::complex<double>(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    Eigen::Index i, double h) {
  auto at = [&](double s) {
    Eigen::VectorXd y = x;
    y[i] += s * h;
    return f(y);
  };
  return (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(std::complex<double> a, std::complex<double> b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Monic polynomial coefficients (c_1..c_n) of prod (1 - r q^-1) with random
// roots of modulus <= rmax; complex roots come in conjugate pairs.
inline Eigen::VectorXd random_poly(std::mt19937_64& rng, int degree, double rmax) {
  std::uniform_real_distribution<double> rad(0.05, rmax), ang(0.2, 2.9), coin(0.0, 1.0);
  std::vector<std::complex<double>> roots;
  while (static_cast<int>(roots.size()) < degree) {
    const double r = rad(rng);
    if (degree - static_cast<int>(roots.size()) >= 2 && coin(rng) < 0.5) {
      const auto z = std::polar(r, ang(rng));
      roots.push_back(z);
      roots.push_back(std::conj(z));
    } else {
      roots.emplace_back(coin(rng) < 0.5 ? r : -r, 0.0);
    }
  }
  // expand prod (1 - r x) by hand
  std::vector<std::complex<double>> c(1, 1.0);
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      next[k] += c[k];
      next[k + 1] -= r * c[k];
    }
    c = next;
  }
  Eigen::VectorXd out(degree);
  for (int k = 0; k < degree; ++k) out[k] = c[static_cast<std::size_t>(k + 1)].real();
  return out;
}

inline levy_sysid::SystemParams random_system(std::mt19937_64& rng, int max_ar, int max_ma,
                                              double rmax = 0.85) {
  std::uniform_int_distribution<int> na(0, max_ar), nm(0, max_ma);
  levy_sysid::SystemParams s;
  int a = na(rng), m = nm(rng);
  if (a + m == 0) a = 1;
  s.ar = random_poly(rng, a, rmax);
  s.ma = random_poly(rng, m, rmax);
  return s;
}

// Naive ARMA recursion dy_n = -sum a_i dy_{n-i} + z_n + sum c_j z_{n-j}.
inline Eigen::VectorXd naive_arma(const Eigen::VectorXd& a, const Eigen::VectorXd& c,
                                  const Eigen::VectorXd& z) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(z.size());
  for (Eigen::Index n = 0; n < z.size(); ++n) {
    double v = z[n];
    for (Eigen::Index j = 0; j < c.size(); ++j)
      if (n - j - 1 >= 0) v += c[j] * z[n - j - 1];
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (n - i - 1 >= 0) v -= a[i] * y[n - i - 1];
    y[n] = v;
  }
  return y;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace test_support
