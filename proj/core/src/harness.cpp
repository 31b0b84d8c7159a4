#include "levy_sysid/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <system_error>
#include <thread>

#include <json.hpp>

#include "levy_sysid/error.hpp"
#include "levy_sysid/linalg.hpp"

namespace levy_sysid {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

FailureKind classify(const std::exception& e) {
  if (dynamic_cast<const StabilityError*>(&e)) return FailureKind::Stability;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const UnsupportedError*>(&e)) {
    return FailureKind::Config;
  }
  if (dynamic_cast<const NumericalError*>(&e)) return FailureKind::Numerical;
  if (dynamic_cast<const IoError*>(&e)) return FailureKind::Io;
  return FailureKind::Other;
}

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, classify(e), e.what());
  }
}

struct Plan {
  FrequencyGrid ecf_grid;
  std::optional<FrequencyGrid> stage3_grid;
};

Plan make_plan(const ExperimentConfig& cfg) {
  return staged("config", [&] {
    validate(cfg);
    Plan plan{build_grid(cfg.ecf_grid, cfg.noise), std::nullopt};
    if (cfg.stage3_enabled) plan.stage3_grid = build_grid(cfg.stage3_grid, cfg.noise);
    return plan;
  });
}

PipelineResult run_planned(const ExperimentConfig& cfg, const Plan& plan, std::uint64_t seed) {
  PipelineResult out;
  out.seed = seed;
  const Eigen::VectorXd dy = staged("simulate", [&] {
    const Eigen::VectorXd z =
        sample_increments(cfg.noise, static_cast<std::size_t>(cfg.n_samples), seed);
    return simulate(cfg.system, z);
  });
  out.pe = staged("pe", [&] {
    const SystemParams init =
        cfg.pe_init ? *cfg.pe_init
                    : long_ar_initial(dy, cfg.system.ar.size(), cfg.system.ma.size(), cfg.pe);
    return pe_estimate(dy, init, cfg.pe);
  });
  const SystemParams theta_pe = cfg.system.with_theta(out.pe.theta_hat);
  out.ecf = staged("ecf", [&] {
    const NoiseParams init = cfg.ecf_init ? cfg.noise.with_eta(*cfg.ecf_init) : cfg.noise;
    return ecf_on_residuals(dy, theta_pe, plan.ecf_grid, init, cfg.ecf, cfg.pe.burn_in);
  });
  if (plan.stage3_grid) {
    out.stage3 = staged("stage3", [&] {
      Stage3Options opts = cfg.stage3;
      opts.burn_in = cfg.pe.burn_in;
      return stage3_estimate(dy, theta_pe, out.ecf->model, *plan.stage3_grid, out.pe.r_p_star,
                             opts);
    });
  }
  return out;
}

std::string unconverged_stages(const PipelineResult& r) {
  std::string s;
  if (!r.pe.converged) s += " pe";
  if (r.ecf && !r.ecf->converged) s += " ecf";
  if (r.stage3 && !r.stage3->converged) s += " stage3";
  return s.empty() ? s : "not converged:" + s;
}

Eigen::MatrixXd stack_rows(const std::vector<const Eigen::VectorXd*>& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.front()->size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = *rows[i];
  return m;
}

Eigen::VectorXd diag_ratio(const Eigen::MatrixXd& num, const Eigen::MatrixXd& den) {
  if (num.size() == 0 || den.size() == 0) return {};
  return num.diagonal().cwiseQuotient(den.diagonal());
}

std::vector<std::string> theta_names(const SystemParams& sys) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < sys.ar.size(); ++i) names.push_back("a" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < sys.ma.size(); ++j) names.push_back("c" + std::to_string(j + 1));
  return names;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json data = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  ordered_json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  out["data"] = data;
  return out;
}

ordered_json cmat_json(const Eigen::MatrixXcd& m) {
  ordered_json out = mat_json(m.real());
  out["imag"] = mat_json(m.imag())["data"];
  return out;
}

ordered_json cvec_json(const Eigen::VectorXcd& v) {
  ordered_json out;
  out["re"] = vec_json(v.real());
  out["im"] = vec_json(v.imag());
  return out;
}

ordered_json config_echo(const ExperimentConfig& cfg) {
  return ordered_json::parse(serialize_config(cfg));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

StageError::StageError(std::string stage, FailureKind kind, const std::string& message)
    : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)), kind_(kind) {}

bool PipelineResult::converged() const {
  return pe.converged && (!ecf || ecf->converged) && (!stage3 || stage3->converged);
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  return run_planned(cfg, make_plan(cfg), seed);
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  return run_pipeline(cfg, derive_seed(cfg.seed, 0));
}

Theory theoretical_covariances(const ExperimentConfig& cfg) {
  const Plan plan = make_plan(cfg);
  return staged("theory", [&] {
    Theory t;
    t.noise_variance = moments(cfg.noise).variance;
    t.r_p_star = r_p_star_exact(cfg.system, t.noise_variance);
    const Eigen::MatrixXd r_inv = spd_inverse_or_nan(t.r_p_star);
    t.sigma_p = t.noise_variance * r_inv;

    const FrequencyGrid g2 = plan.ecf_grid.conjugate_closure();
    const HermitianFactor cfac(regularize(c_matrix(cfg.noise, g2), cfg.ecf.tau), "C matrix");
    const Eigen::MatrixXcd g = cf_jacobian(cfg.noise, g2);
    t.ecf_avar = spd_inverse_or_nan(symmetrize((g.adjoint() * cfac.solve(g)).real()));

    const FrequencyGrid g3 =
        (plan.stage3_grid ? *plan.stage3_grid : build_grid(cfg.stage3_grid, cfg.noise))
            .conjugate_closure();
    t.kappa = kappa(cfg.noise, g3, cfg.stage3.tau);
    t.stage3_avar = r_inv / t.kappa;
    if (density(cfg.noise, 0.0)) {
      t.mu = fisher_location(cfg.noise);
      t.sigma_ml = r_inv / *t.mu;
    }
    return t;
  });
}

McReport run_monte_carlo(const ExperimentConfig& cfg, int threads) {
  const Plan plan = make_plan(cfg);
  McReport rep;
  rep.config = cfg;
  rep.threads = threads > 0 ? threads : cfg.threads;
  rep.theory = theoretical_covariances(cfg);
  rep.n_eff = static_cast<double>(cfg.n_samples - cfg.pe.burn_in);
  if (cfg.replications < 50) {
    rep.warnings.push_back("fewer than 50 replications; covariance comparisons are unreliable");
  }

  const auto n = static_cast<std::size_t>(cfg.replications);
  rep.replications.resize(n);
  std::vector<double> seconds(n, 0.0);
  std::atomic<std::size_t> next{0};
  const auto t0 = std::chrono::steady_clock::now();
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto start = std::chrono::steady_clock::now();
      ReplicationRecord& rec = rep.replications[i];
      rec.index = static_cast<std::int64_t>(i);
      rec.seed = derive_seed(cfg.seed, i);
      try {
        const PipelineResult r = run_planned(cfg, plan, rec.seed);
        rec.theta_hat = r.pe.theta_hat;
        rec.eta_hat = r.ecf->eta_hat;
        if (r.stage3) rec.theta_hat2 = r.stage3->theta_hat2;
        rec.success = r.converged();
        rec.error = unconverged_stages(r);
      } catch (const std::exception& e) {
        rec.success = false;
        rec.error = e.what();
      }
      seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int k = std::max(1, std::min<int>(rep.threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < k; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (n > 0) {
    double sum = 0.0;
    for (double s : seconds) sum += s;
    rep.mean_replication_seconds = sum / static_cast<double>(n);
    rep.max_replication_seconds = *std::max_element(seconds.begin(), seconds.end());
  }

  std::vector<const Eigen::VectorXd*> th, et, th2;
  for (const auto& r : rep.replications) {
    if (!r.success) continue;
    th.push_back(&r.theta_hat);
    et.push_back(&r.eta_hat);
    if (r.theta_hat2.size() > 0) th2.push_back(&r.theta_hat2);
  }
  rep.n_success = static_cast<std::int64_t>(th.size());
  if (rep.n_success == 0 || 10 * rep.n_success < 9 * static_cast<std::int64_t>(n)) {
    std::string first;
    for (const auto& r : rep.replications) {
      if (!r.success) {
        first = r.error;
        break;
      }
    }
    throw InsufficientSuccessError(std::to_string(rep.n_success) + " of " + std::to_string(n) +
                                   " replications succeeded (need 90%); first failure: " + first);
  }

  const Eigen::MatrixXd t1 = stack_rows(th), e1 = stack_rows(et), t2 = stack_rows(th2);
  rep.mean_theta = t1.colwise().mean().transpose();
  rep.mean_eta = e1.colwise().mean().transpose();
  rep.cov_theta = rep.n_eff * sample_covariance(t1);
  rep.cov_eta = rep.n_eff * sample_covariance(e1);
  rep.ratio_pe = diag_ratio(rep.cov_theta, rep.theory.sigma_p);
  rep.ratio_ecf = diag_ratio(rep.cov_eta, rep.theory.ecf_avar);
  if (t2.size() > 0) {
    rep.mean_theta2 = t2.colwise().mean().transpose();
    rep.cov_theta2 = rep.n_eff * sample_covariance(t2);
    rep.cross_eta_theta2 = rep.n_eff * sample_cross_covariance(e1, t2);
    rep.ratio_stage3 = diag_ratio(rep.cov_theta2, rep.theory.stage3_avar);
    rep.stage3_vs_pe = diag_ratio(rep.cov_theta2, rep.cov_theta);
  }
  return rep;
}

std::string report_json(const McReport& report) {
  ordered_json j;
  j["config"] = config_echo(report.config);
  j["n_replications"] = report.replications.size();
  j["n_success"] = report.n_success;
  j["n_eff"] = report.n_eff;
  j["warnings"] = report.warnings;

  const Theory& t = report.theory;
  ordered_json th;
  th["noise_variance"] = t.noise_variance;
  th["r_p_star"] = mat_json(t.r_p_star);
  th["sigma_p"] = mat_json(t.sigma_p);
  th["ecf_avar"] = mat_json(t.ecf_avar);
  th["kappa"] = t.kappa;
  th["kappa_times_variance"] = t.kappa * t.noise_variance;
  th["stage3_avar"] = mat_json(t.stage3_avar);
  th["mu"] = t.mu ? ordered_json(*t.mu) : ordered_json(nullptr);
  th["sigma_ml"] = t.sigma_ml ? mat_json(*t.sigma_ml) : ordered_json(nullptr);
  j["theory"] = th;

  ordered_json emp;
  emp["mean_theta_hat"] = vec_json(report.mean_theta);
  emp["mean_eta_hat"] = vec_json(report.mean_eta);
  emp["mean_theta_hat2"] = vec_json(report.mean_theta2);
  emp["cov_theta_hat"] = mat_json(report.cov_theta);
  emp["cov_eta_hat"] = mat_json(report.cov_eta);
  emp["cov_theta_hat2"] = mat_json(report.cov_theta2);
  emp["cross_eta_hat_theta_hat2"] = mat_json(report.cross_eta_theta2);
  j["empirical"] = emp;

  ordered_json ratios;
  ratios["pe_vs_sigma_p"] = vec_json(report.ratio_pe);
  ratios["ecf_vs_avar"] = vec_json(report.ratio_ecf);
  ratios["stage3_vs_avar"] = vec_json(report.ratio_stage3);
  ratios["stage3_vs_pe"] = vec_json(report.stage3_vs_pe);
  j["ratios"] = ratios;

  ordered_json reps = ordered_json::array();
  for (const auto& r : report.replications) {
    ordered_json x;
    x["index"] = r.index;
    x["seed"] = r.seed;
    x["success"] = r.success;
    if (!r.error.empty()) x["error"] = r.error;
    x["theta_hat"] = vec_json(r.theta_hat);
    x["eta_hat"] = vec_json(r.eta_hat);
    x["theta_hat2"] = vec_json(r.theta_hat2);
    reps.push_back(x);
  }
  j["replications"] = reps;
  return j.dump(2) + "\n";
}

std::string report_csv(const McReport& report) {
  const auto& cfg = report.config;
  const auto tn = theta_names(cfg.system);
  const auto& en = parameter_names(cfg.noise.kind);
  std::string out = "seed";
  for (const auto& s : tn) out += ",theta_hat." + s;
  for (const auto& s : en) out += ",eta_hat." + s;
  if (cfg.stage3_enabled) {
    for (const auto& s : tn) out += ",theta_hat2." + s;
  }
  out += "\n";
  for (const auto& r : report.replications) {
    if (!r.success) continue;
    out += std::to_string(r.seed);
    for (Eigen::Index i = 0; i < r.theta_hat.size(); ++i) out += "," + fmt17(r.theta_hat[i]);
    for (Eigen::Index i = 0; i < r.eta_hat.size(); ++i) out += "," + fmt17(r.eta_hat[i]);
    for (Eigen::Index i = 0; i < r.theta_hat2.size(); ++i) out += "," + fmt17(r.theta_hat2[i]);
    out += "\n";
  }
  return out;
}

std::string timing_json(const McReport& report) {
  ordered_json j;
  j["threads"] = report.threads;
  j["wall_seconds"] = report.wall_seconds;
  j["mean_replication_seconds"] = report.mean_replication_seconds;
  j["max_replication_seconds"] = report.max_replication_seconds;
  return j.dump(2) + "\n";
}

std::string pipeline_json(const ExperimentConfig& cfg, const PipelineResult& r) {
  ordered_json j;
  j["config"] = config_echo(cfg);
  j["seed"] = r.seed;
  ordered_json pe;
  pe["theta_hat"] = vec_json(r.pe.theta_hat);
  pe["cost"] = r.pe.cost;
  pe["sigma2_hat"] = r.pe.sigma2_hat;
  pe["r_p_star"] = mat_json(r.pe.r_p_star);
  pe["sigma_p"] = mat_json(r.pe.sigma_p);
  pe["iterations"] = r.pe.iterations;
  pe["converged"] = r.pe.converged;
  j["pe"] = pe;
  if (r.ecf) {
    const auto& e = *r.ecf;
    ordered_json ecf;
    ecf["eta_hat"] = vec_json(e.eta_hat);
    ecf["grid"] = vec_json(e.grid.points());
    ecf["c_matrix"] = cmat_json(e.c_matrix);
    ecf["avar_optimal"] = mat_json(e.avar_optimal);
    ecf["avar_sandwich"] = mat_json(e.avar_sandwich);
    ecf["cost"] = e.cost;
    ecf["iterations"] = e.iterations;
    ecf["converged"] = e.converged;
    j["ecf"] = ecf;
  }
  if (r.stage3) {
    const auto& s = *r.stage3;
    ordered_json s3;
    s3["theta_hat2"] = vec_json(s.theta_hat2);
    s3["grid"] = vec_json(s.grid.points());
    s3["psi"] = cvec_json(s.psi);
    s3["kappa"] = s.kappa;
    s3["kappa_imag"] = s.kappa_imag;
    s3["avar_stage3"] = mat_json(s.avar_stage3);
    s3["efficiency_ratio_vs_pe"] = s.efficiency_ratio_vs_pe;
    s3["cost"] = s.cost;
    s3["iterations"] = s.iterations;
    s3["converged"] = s.converged;
    j["stage3"] = s3;
  }
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void emit_report(const McReport& report, const std::filesystem::path& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
  if (format == ReportFormat::Json) {
    write_text_file(dir / "report.json", report_json(report));
    write_text_file(dir / "timing.json", timing_json(report));
  } else {
    write_text_file(dir / "estimates.csv", report_csv(report));
  }
}

}  // namespace levy_sysid
