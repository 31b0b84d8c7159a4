#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "levy_sysid/error.hpp"
#include "levy_sysid/linear_system.hpp"
#include "test_support.hpp"

using namespace levy_sysid;
using test_support::naive_arma;
using test_support::random_system;

namespace {

Eigen::VectorXd randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (auto& v : z) v = nd(rng);
  return z;
}

SystemParams arma(std::initializer_list<double> a, std::initializer_list<double> c) {
  SystemParams s;
  s.ar = Eigen::VectorXd(static_cast<Eigen::Index>(a.size()));
  s.ma = Eigen::VectorXd(static_cast<Eigen::Index>(c.size()));
  Eigen::Index i = 0;
  for (double v : a) s.ar[i++] = v;
  i = 0;
  for (double v : c) s.ma[i++] = v;
  return s;
}

}  // namespace

TEST(LinearSystem, IdentitySystemPassesThrough) {
  const Eigen::VectorXd z = randn(100, 1);
  SystemParams id;
  id.ar = Eigen::VectorXd(0);
  id.ma = Eigen::VectorXd(0);
  EXPECT_TRUE(simulate(id, z) == z);
  EXPECT_TRUE(innovations(id, z, 0).eps == z);
}

TEST(LinearSystem, Ma1ImpulseResponse) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(5);
  z[0] = 1.0;
  const Eigen::VectorXd y = simulate(arma({}, {0.5}), z);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.5);
  EXPECT_EQ(y.tail(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LinearSystem, Arma11MatchesNaiveRecursion) {
  const Eigen::VectorXd z = randn(50, 2);
  const Eigen::VectorXd y = simulate(arma({-0.5}, {0.3}), z);
  Eigen::VectorXd want(50);
  for (int n = 0; n < 50; ++n) {
    want[n] = z[n] + (n > 0 ? 0.5 * want[n - 1] + 0.3 * z[n - 1] : 0.0);
  }
  EXPECT_LT((y - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LinearSystem, RandomSystemsMatchNaiveRecursion) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto sys = random_system(rng, 3, 3);
    const Eigen::VectorXd z = randn(300, 100 + k);
    const Eigen::VectorXd y = simulate(sys, z);
    const Eigen::VectorXd want = naive_arma(sys.ar, sys.ma, z);
    EXPECT_LT((y - want).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + want.cwiseAbs().maxCoeff()));
  }
}

TEST(LinearSystem, InverseCompositionIsExact) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const auto sys = random_system(rng, 3, 3);
    const Eigen::VectorXd z = randn(1000, 200 + k);
    const Eigen::VectorXd eps = innovations(sys, simulate(sys, z), 0).eps;
    EXPECT_LE((eps - z).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LinearSystem, Linearity) {
  std::mt19937_64 rng(5);
  const auto sys = random_system(rng, 3, 3);
  const Eigen::VectorXd z1 = randn(500, 1), z2 = randn(500, 2);
  const Eigen::VectorXd lhs = simulate(sys, 1.7 * z1 - 0.4 * z2);
  const Eigen::VectorXd rhs = 1.7 * simulate(sys, z1) - 0.4 * simulate(sys, z2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
}

TEST(LinearSystem, ExponentialForgetting) {
  const auto sys = arma({-1.2, 0.36}, {0.4});
  const double rmax = 0.6;
  const auto steps = static_cast<Eigen::Index>(200.0 / -std::log(rmax));
  Eigen::VectorXd z1 = randn(static_cast<std::size_t>(steps + 50), 8), z2 = z1;
  z2[0] += 5.0;
  const Eigen::VectorXd d = simulate(sys, z1) - simulate(sys, z2);
  EXPECT_LT(d.tail(d.size() - steps).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LinearSystem, SensitivitiesMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    auto sys = k == 0 ? arma({-0.6, 0.2}, {0.4}) : random_system(rng, 3, 3, 0.8);
    const Eigen::VectorXd dy = simulate(sys, randn(400, 300 + k));
    const auto sig = innovations(sys, dy, 2);
    const Eigen::VectorXd theta = sys.theta();
    const Eigen::Index p = theta.size();
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p; ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const auto sp = innovations(sys.with_theta(tp), dy, 1);
      const auto sm = innovations(sys.with_theta(tm), dy, 1);
      const Eigen::VectorXd fd = (sp.eps - sm.eps) / (2 * h);
      const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
      EXPECT_LT((sig.eps_grad.col(i) - fd).cwiseAbs().maxCoeff() / scale, 1e-4);
      const Eigen::MatrixXd fd2 = (sp.eps_grad - sm.eps_grad) / (2 * h);
      for (Eigen::Index j = 0; j < p; ++j) {
        const double scale2 = std::max(1.0, fd2.col(j).cwiseAbs().maxCoeff());
        EXPECT_LT((sig.eps_hess.col(i * p + j) - fd2.col(j)).cwiseAbs().maxCoeff() / scale2, 1e-4);
      }
    }
  }
}

TEST(LinearSystem, Ma1SensitivityAtZeroIsLaggedInnovation) {
  const Eigen::VectorXd z = randn(50, 9);
  const auto sig = innovations(arma({}, {0.0}), z, 1);
  EXPECT_EQ(sig.eps_grad(0, 0), 0.0);
  for (Eigen::Index n = 1; n < z.size(); ++n) EXPECT_DOUBLE_EQ(sig.eps_grad(n, 0), -sig.eps[n - 1]);
}

TEST(LinearSystem, StabilityExamples) {
  Eigen::VectorXd a(1);
  a << -0.5;
  auto r = check_stability(a);
  EXPECT_TRUE(r.stable);
  EXPECT_NEAR(r.margin, 0.5, 1e-14);
  a << -1.01;
  EXPECT_FALSE(check_stability(a).stable);

  Eigen::VectorXd q(2);
  q << -1.2, 0.36;
  r = check_stability(q);
  // quadratic formula for z^2 - 1.2 z + 0.36
  const double disc = 1.2 * 1.2 - 4 * 0.36;
  const double root = (1.2 + std::sqrt(std::max(0.0, disc))) / 2.0;
  ASSERT_EQ(r.roots.size(), 2u);
  for (const auto& z : r.roots) EXPECT_NEAR(std::abs(z), root, 1e-7);
  EXPECT_NEAR(root, 0.6, 1e-12);
}

TEST(LinearSystem, StabilityErrorsListRootModuli) {
  try {
    simulate(arma({-1.01}, {}), randn(10, 1));
    FAIL() << "expected StabilityError";
  } catch (const StabilityError& e) {
    EXPECT_NE(std::string(e.what()).find("1.01"), std::string::npos) << e.what();
  }
  EXPECT_THROW(innovations(arma({-0.5}, {1.2}), randn(10, 1)), StabilityError);
}

TEST(LinearSystem, ProjectStable) {
  const auto stable = arma({-0.5, 0.06}, {0.3});
  const auto same = project_stable(stable);
  EXPECT_TRUE(same.ar == stable.ar);
  EXPECT_TRUE(same.ma == stable.ma);

  const auto p = project_stable(arma({-1.05}, {}));
  EXPECT_NEAR(p.ar[0], -0.96, 1e-14);

  // complex pair at modulus 1.1 -> shrunk pair stays conjugate, coefficients real
  const double r = 1.1, w = 0.7;
  const auto q = project_stable(arma({-2 * r * std::cos(w), r * r}, {}));
  const auto roots = check_stability(q.ar).roots;
  ASSERT_EQ(roots.size(), 2u);
  EXPECT_NEAR(std::abs(roots[0]), 0.96, 1e-12);
  EXPECT_NEAR(std::abs(roots[1]), 0.96, 1e-12);
  EXPECT_NEAR(std::abs(roots[0] - std::conj(roots[1])), 0.0, 1e-12);
  EXPECT_NEAR(q.ar[1], 0.96 * 0.96, 1e-12);
  EXPECT_NEAR(q.ar[0], -2 * 0.96 * std::cos(w), 1e-12);
}

TEST(LinearSystem, ThetaRoundTrip) {
  const auto s = arma({-0.5, 0.1}, {0.3});
  const auto t = SystemParams::from_theta(s.theta(), 2);
  EXPECT_TRUE(t.ar == s.ar);
  EXPECT_TRUE(t.ma == s.ma);
  EXPECT_EQ(s.dim(), 3);
}
