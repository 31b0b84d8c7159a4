#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "levy_sysid/error.hpp"
#include "levy_sysid/linalg.hpp"
#include "levy_sysid/noise_models.hpp"
#include "levy_sysid/pe_estimator.hpp"
#include "test_support.hpp"

using namespace levy_sysid;

namespace {

SystemParams arma11(double a, double c) {
  SystemParams s;
  s.ar = Eigen::VectorXd::Constant(1, a);
  s.ma = Eigen::VectorXd::Constant(1, c);
  return s;
}

SystemParams ar1(double a) {
  SystemParams s;
  s.ar = Eigen::VectorXd::Constant(1, a);
  s.ma = Eigen::VectorXd(0);
  return s;
}

Eigen::VectorXd gaussian_data(const SystemParams& sys, Eigen::Index n, std::uint64_t seed) {
  return simulate(sys, sample_increments(NoiseParams::gaussian(1.0), static_cast<std::size_t>(n), seed));
}

}  // namespace

TEST(PeEstimator, CostGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto truth = test_support::random_system(rng, 2, 2, 0.8);
    const Eigen::VectorXd dy = gaussian_data(truth, 3000, 50 + k);
    // evaluate away from the optimum so the gradient is not tiny
    Eigen::VectorXd theta = truth.theta();
    theta.array() *= 0.8;
    const auto sys = project_stable(truth.with_theta(theta));
    const PeCost c = pe_cost(sys, dy, 100);
    const auto f = [&](const Eigen::VectorXd& t) { return pe_cost(sys.with_theta(t), dy, 100).value; };
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double fd = test_support::central_diff(f, sys.theta(), i, 1e-6);
      EXPECT_LT(test_support::rel_err(c.grad[i], fd, 1e-2), 1e-4) << "instance " << k << " i=" << i;
    }
  }
}

TEST(PeEstimator, IdentitySystemCost) {
  SystemParams id;
  id.ar = Eigen::VectorXd(0);
  id.ma = Eigen::VectorXd(0);
  const Eigen::VectorXd z = sample_increments(NoiseParams::gaussian(1.0), 1000, 3);
  const PeCost c = pe_cost(id, z, 0);
  EXPECT_NEAR(c.value, 0.5 * z.squaredNorm(), 1e-9);
  EXPECT_EQ(c.grad.size(), 0);
}

TEST(PeEstimator, GradientScalesAsRootNAtTruthAndNAway) {
  const auto truth = arma11(-0.5, 0.3);
  const Eigen::Index n = 10000;
  double at_truth = 0.0, away = 0.0;
  for (int s = 0; s < 20; ++s) {
    const Eigen::VectorXd dy = gaussian_data(truth, n + 500, 900 + s);
    at_truth += pe_cost(truth, dy, 500).grad.norm();
    away += pe_cost(arma11(-0.4, 0.3), dy, 500).grad.norm();
  }
  at_truth /= 20;
  away /= 20;
  // E|grad| ~ sqrt(N tr R) at the truth, ~ N |W_theta| away from it
  EXPECT_LT(at_truth, 5.0 * std::sqrt(static_cast<double>(n)));
  EXPECT_GT(away / at_truth, 0.1 * std::sqrt(static_cast<double>(n)));
}

TEST(PeEstimator, ZeroDataIsDegenerate) {
  const Eigen::VectorXd dy = Eigen::VectorXd::Zero(2000);
  const auto init = arma11(-0.3, 0.2);
  const PeResult r = pe_estimate(dy, init, {});
  EXPECT_TRUE(r.theta_hat == init.theta());
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
}

TEST(PeEstimator, ConsistentForArma11) {
  const auto truth = arma11(-0.5, 0.3);
  int close = 0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    const Eigen::VectorXd dy = gaussian_data(truth, 20000, 100 + s);
    const PeResult r = pe_estimate(dy, long_ar_initial(dy, 1, 1));
    EXPECT_TRUE(r.converged);
    if ((r.theta_hat - truth.theta()).cwiseAbs().maxCoeff() < 0.05) ++close;
  }
  EXPECT_GE(close, static_cast<int>(0.95 * seeds));
}

TEST(PeEstimator, ResultInvariants) {
  const auto truth = arma11(-0.5, 0.3);
  const Eigen::VectorXd dy = gaussian_data(truth, 20000, 5);
  const PeResult r = pe_estimate(dy, truth);
  EXPECT_TRUE(r.converged);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.r_p_star);
  EXPECT_GT(es.eigenvalues().minCoeff(), 1e-10 * es.eigenvalues().maxCoeff());
  EXPECT_LT((r.sigma_p - r.sigma2_hat * r.r_p_star.inverse()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.grad.cwiseAbs().maxCoeff(), 1e-8 * dy.size());
}

TEST(PeEstimator, ScaleEquivariance) {
  const auto truth = arma11(-0.5, 0.3);
  const Eigen::VectorXd dy = gaussian_data(truth, 20000, 6);
  const auto init = arma11(-0.3, 0.1);
  const PeResult a = pe_estimate(dy, init);
  const PeResult b = pe_estimate(7.0 * dy, init);
  EXPECT_LT((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(b.cost / a.cost, 49.0, 1e-8 * 49.0);
}

// AR(1): eps_theta = dy_{n-1}, E[dy^2] = sigma^2 / (1 - a^2), so
// Sigma_P = sigma^2 / E[dy^2] = 1 - a^2.
TEST(PeEstimator, Ar1SigmaPFormula) {
  const double a = -0.5;
  const auto sys = ar1(a);
  EXPECT_NEAR(r_p_star_exact(sys, 1.0)(0, 0), 1.0 / (1.0 - a * a), 1e-12);

  // brute-force check of E[dy^2] on one long path
  const Eigen::VectorXd dy = gaussian_data(sys, 2000000, 7);
  EXPECT_NEAR(dy.squaredNorm() / dy.size(), 1.0 / (1.0 - a * a), 0.01);
}

TEST(PeEstimator, Ar1EmpiricalVarianceMatchesSigmaP) {
  const double a = -0.5;
  const auto sys = ar1(a);
  const Eigen::Index n = 20000;
  const int reps = 500;
  Eigen::VectorXd est(reps);
  for (int s = 0; s < reps; ++s) {
    const Eigen::VectorXd dy = gaussian_data(sys, n + 500, 10000 + s);
    est[s] = pe_estimate(dy, sys).theta_hat[0];
  }
  const double var = (est.array() - est.mean()).square().sum() / (reps - 1);
  EXPECT_NEAR(n * var / (1 - a * a), 1.0, 0.15);
}

TEST(PeEstimator, LongArInitialIsStableAndClose) {
  const auto truth = arma11(-0.5, 0.3);
  const Eigen::VectorXd dy = gaussian_data(truth, 20000, 8);
  const auto init = long_ar_initial(dy, 1, 1);
  EXPECT_TRUE(check_stability(init.ar).stable);
  EXPECT_TRUE(check_stability(init.ma).stable);
  EXPECT_LT((init.theta() - truth.theta()).cwiseAbs().maxCoeff(), 0.1);
}

TEST(PeEstimator, RejectsTooShortData) {
  EXPECT_THROW(pe_estimate(Eigen::VectorXd::Ones(505), arma11(-0.5, 0.3)), ConfigError);
}

TEST(PeEstimator, RateSurrogateForRootN) {
  const auto truth = arma11(-0.5, 0.3);
  std::vector<double> med;
  for (Eigen::Index n : {4000, 16000}) {
    std::vector<double> err;
    for (int s = 0; s < 100; ++s) {
      const Eigen::VectorXd dy = gaussian_data(truth, n + 500, 5000 + s);
      err.push_back((pe_estimate(dy, truth).theta_hat - truth.theta()).norm());
    }
    med.push_back(test_support::median(err));
  }
  EXPECT_NEAR(med[0] / med[1], 2.0, 0.6);
}
