#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levy_sysid/config.hpp"
#include "levy_sysid/ecf_iid.hpp"
#include "levy_sysid/ecf_system.hpp"
#include "levy_sysid/pe_estimator.hpp"

namespace levy_sysid {

/// splitmix64-style seed for replication `index`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

enum class FailureKind { Config, Stability, Numerical, Io, Other };

/// An error raised inside one pipeline stage ("config", "simulate", "pe",
/// "ecf", "stage3"); what() is prefixed with "[stage] ".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, FailureKind kind, const std::string& message);
  const std::string& stage() const { return stage_; }
  FailureKind kind() const { return kind_; }

 private:
  std::string stage_;
  FailureKind kind_;
};

/// Raised by run_monte_carlo when fewer than 90% of replications succeed.
class InsufficientSuccessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineResult {
  std::uint64_t seed = 0;
  PeResult pe;
  std::optional<EcfIidResult> ecf;
  std::optional<Stage3Result> stage3;

  /// All executed stages converged.
  bool converged() const;
};

/// simulate -> pe_estimate -> ecf_on_residuals -> stage3_estimate with the
/// noise drawn from `seed`. Errors are rethrown as StageError.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed);
/// Same with seed derive_seed(cfg.seed, 0).
PipelineResult run_pipeline(const ExperimentConfig& cfg);

struct ReplicationRecord {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  bool success = false;
  std::string error;  // stage-tagged message or the non-converged stages
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd eta_hat;
  Eigen::VectorXd theta_hat2;
};

/// Asymptotic covariances at the configured (true) parameters.
struct Theory {
  double noise_variance = 0.0;
  Eigen::MatrixXd r_p_star;     // E[eps_theta eps_theta^T]
  Eigen::MatrixXd sigma_p;      // sigma^2 R_P*^{-1}
  Eigen::MatrixXd ecf_avar;     // (G^* C^{-1} G)^{-1} on the stage-2 grid
  double kappa = 0.0;           // psi^* C^{-1} psi on the stage-3 grid
  Eigen::MatrixXd stage3_avar;  // kappa^{-1} R_P*^{-1}
  std::optional<double> mu;     // location Fisher information when a density is known
  std::optional<Eigen::MatrixXd> sigma_ml;  // mu^{-1} R_P*^{-1}
};

struct McReport {
  ExperimentConfig config;
  std::vector<ReplicationRecord> replications;  // all of them, in index order
  std::int64_t n_success = 0;
  double n_eff = 0.0;  // samples per replication after burn-in; scales the covariances
  std::vector<std::string> warnings;

  Theory theory;

  // N_eff times the sample covariance over successful replications.
  Eigen::VectorXd mean_theta, mean_eta, mean_theta2;
  Eigen::MatrixXd cov_theta, cov_eta, cov_theta2, cross_eta_theta2;

  // diag(empirical) / diag(theory), and the stage-3 over PE variance ratio.
  Eigen::VectorXd ratio_pe, ratio_ecf, ratio_stage3, stage3_vs_pe;

  // Wall clock; written to a separate file so reports stay reproducible.
  int threads = 1;
  double wall_seconds = 0.0;
  double mean_replication_seconds = 0.0;
  double max_replication_seconds = 0.0;
};

Theory theoretical_covariances(const ExperimentConfig& cfg);

/// Runs cfg.replications independent pipelines on `threads` workers
/// (cfg.threads when 0). Replication i uses derive_seed(cfg.seed, i).
/// Throws InsufficientSuccessError below 90% successes.
McReport run_monte_carlo(const ExperimentConfig& cfg, int threads = 0);

std::string report_json(const McReport& report);
/// One row per successful replication: seed, theta_hat..., eta_hat..., theta_hat2...
std::string report_csv(const McReport& report);
std::string timing_json(const McReport& report);
std::string pipeline_json(const ExperimentConfig& cfg, const PipelineResult& result);

enum class ReportFormat { Json, Csv };

/// Writes report.json / estimates.csv (and timing.json with Json) into `dir`,
/// creating it if needed. Throws IoError.
void emit_report(const McReport& report, const std::filesystem::path& dir, ReportFormat format);

/// Writes `content` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace levy_sysid
