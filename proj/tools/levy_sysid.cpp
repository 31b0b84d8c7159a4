// levy-sysid: simulate, identify and Monte Carlo check ARMA systems driven by
// Levy increments.
//
//   levy-sysid run --config cfg.json [--out dir] [--threads k] [--replications R]
//   levy-sysid mc  --config cfg.json [--out dir] [--threads k] [--replications R]
//
// Exit codes: 0 ok, 2 config/stability, 3 too few successful replications, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "levy_sysid/config.hpp"
#include "levy_sysid/error.hpp"
#include "levy_sysid/harness.hpp"

namespace ls = levy_sysid;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kInsufficient = 3;
constexpr int kIo = 4;

struct Args {
  std::string config;
  std::string out;
  int threads = 0;
  int replications = 0;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", a.out, "output directory (default: config output.dir)");
  cmd->add_option("--threads", a.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--replications", a.replications, "number of replications")
      ->check(CLI::PositiveNumber);
}

ls::ExperimentConfig load(const Args& a, bool single_run) {
  ls::ExperimentConfig cfg = ls::load_config(a.config);
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.threads > 0) cfg.threads = a.threads;
  if (a.replications > 0) {
    cfg.replications = a.replications;
  } else if (single_run) {
    cfg.replications = 1;
  }
  return cfg;
}

void summarize(const ls::McReport& rep, const std::filesystem::path& dir) {
  std::printf("%lld/%zu replications succeeded, reports in %s\n",
              static_cast<long long>(rep.n_success), rep.replications.size(), dir.c_str());
  for (Eigen::Index i = 0; i < rep.stage3_vs_pe.size(); ++i) {
    std::printf("  theta[%lld]: var(stage3)/var(pe) = %.4f\n", static_cast<long long>(i),
                rep.stage3_vs_pe[i]);
  }
}

// run: one pipeline at derive_seed(seed, 0) written to pipeline.json; with
// --replications R > 1 a Monte Carlo report is written as well.
int cmd_run(const Args& a) {
  const ls::ExperimentConfig cfg = load(a, true);
  const std::filesystem::path dir = cfg.out_dir;
  const ls::PipelineResult res = ls::run_pipeline(cfg);
  std::filesystem::create_directories(dir);
  ls::write_text_file(dir / "pipeline.json", ls::pipeline_json(cfg, res));
  std::printf("theta_hat (pe):");
  for (Eigen::Index i = 0; i < res.pe.theta_hat.size(); ++i) std::printf(" %.6g", res.pe.theta_hat[i]);
  std::printf("\neta_hat:");
  for (Eigen::Index i = 0; i < res.ecf->eta_hat.size(); ++i) std::printf(" %.6g", res.ecf->eta_hat[i]);
  if (res.stage3) {
    std::printf("\ntheta_hat2 (stage 3):");
    for (Eigen::Index i = 0; i < res.stage3->theta_hat2.size(); ++i)
      std::printf(" %.6g", res.stage3->theta_hat2[i]);
  }
  std::printf("\nconverged: %s\n", res.converged() ? "yes" : "no");
  if (cfg.replications > 1) {
    const ls::McReport rep = ls::run_monte_carlo(cfg);
    ls::emit_report(rep, dir, ls::ReportFormat::Json);
    ls::emit_report(rep, dir, ls::ReportFormat::Csv);
    summarize(rep, dir);
  }
  return kOk;
}

int cmd_mc(const Args& a) {
  const ls::ExperimentConfig cfg = load(a, false);
  const std::filesystem::path dir = cfg.out_dir;
  const ls::McReport rep = ls::run_monte_carlo(cfg);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  ls::emit_report(rep, dir, ls::ReportFormat::Json);
  ls::emit_report(rep, dir, ls::ReportFormat::Csv);
  summarize(rep, dir);
  return kOk;
}

int fail(int code, const std::string& msg) {
  std::fprintf(stderr, "levy-sysid: %s\n", msg.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage identification of Levy-driven linear systems"};
  app.require_subcommand(1);
  Args args;
  CLI::App* run = app.add_subcommand("run", "run the pipeline once (or R times with --replications)");
  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo study with covariance comparisons");
  add_common(run, args);
  add_common(mc, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    return run->parsed() ? cmd_run(args) : cmd_mc(args);
  } catch (const ls::StageError& e) {
    switch (e.kind()) {
      case ls::FailureKind::Config:
      case ls::FailureKind::Stability: return fail(kConfig, e.what());
      case ls::FailureKind::Io: return fail(kIo, e.what());
      default: return fail(kInsufficient, e.what());
    }
  } catch (const ls::InsufficientSuccessError& e) {
    return fail(kInsufficient, e.what());
  } catch (const ls::IoError& e) {
    return fail(kIo, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kIo, e.what());
  } catch (const ls::ConfigError& e) {
    return fail(kConfig, std::string("[config] ") + e.what());
  } catch (const ls::DomainError& e) {
    return fail(kConfig, std::string("[config] ") + e.what());
  } catch (const ls::StabilityError& e) {
    return fail(kConfig, std::string("[config] ") + e.what());
  }
}
