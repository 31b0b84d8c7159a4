#include "levy_sysid/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "levy_sysid/error.hpp"

namespace levy_sysid {

using nlohmann::json;

namespace {

const std::map<std::string, NoiseKind, std::less<>> kKindAliases = {
    {"gaussian", NoiseKind::GaussianIid},
    {"gaussian_mixture", NoiseKind::GaussianMixture},
    {"compound_poisson", NoiseKind::CompoundPoissonGaussian},
    {"variance_gamma", NoiseKind::VarianceGamma},
    {"vg", NoiseKind::VarianceGamma},
    {"cgmy", NoiseKind::CgmyCfOnly},
};

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
void read_opt(const json& obj, const std::string& key, const std::string& where, T& out) {
  if (obj.contains(key)) out = get_as<T>(obj, key, where);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.size() == 0 || a == b);
}

SystemParams parse_system(const json& j, const std::string& where) {
  reject_unknown(j, where, {"ar", "ma"});
  SystemParams sys;
  sys.ar = to_vector(j.contains("ar") ? get_as<std::vector<double>>(j, "ar", where)
                                      : std::vector<double>{});
  sys.ma = to_vector(j.contains("ma") ? get_as<std::vector<double>>(j, "ma", where)
                                      : std::vector<double>{});
  return sys;
}

json system_json(const SystemParams& sys) {
  return {{"ar", to_std(sys.ar)}, {"ma", to_std(sys.ma)}};
}

NoiseKind parse_kind(const std::string& name) {
  if (const auto it = kKindAliases.find(name); it != kKindAliases.end()) return it->second;
  return noise_kind_from_string(name);
}

Eigen::VectorXd parse_params(const json& j, NoiseKind kind, const std::string& where) {
  const auto& names = parameter_names(kind);
  reject_unknown(j, where, {names.begin(), names.end()});
  Eigen::VectorXd eta(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!j.contains(names[i])) throw ConfigError(where + ": missing parameter '" + names[i] + "'");
    eta[static_cast<Eigen::Index>(i)] = get_as<double>(j, names[i], where);
  }
  return eta;
}

json params_json(NoiseKind kind, const Eigen::VectorXd& eta) {
  json out = json::object();
  const auto& names = parameter_names(kind);
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = eta[static_cast<Eigen::Index>(i)];
  return out;
}

GridSpec parse_grid(const json& j, const std::string& where) {
  GridSpec g;
  if (j.contains("points")) {
    reject_unknown(j, where, {"points"});
    g.mode = GridSpec::Mode::Points;
    g.points = get_as<std::vector<double>>(j, "points", where);
    g.m = static_cast<Eigen::Index>(g.points.size());
    return g;
  }
  reject_unknown(j, where, {"mode", "m", "min", "max"});
  const std::string mode = j.contains("mode") ? get_as<std::string>(j, "mode", where) : "auto";
  read_opt(j, "m", where, g.m);
  if (mode == "auto") {
    g.mode = GridSpec::Mode::Auto;
  } else if (mode == "linear") {
    g.mode = GridSpec::Mode::Linear;
    g.max = get_as<double>(j, "max", where);
  } else if (mode == "log") {
    g.mode = GridSpec::Mode::Log;
    g.min = get_as<double>(j, "min", where);
    g.max = get_as<double>(j, "max", where);
  } else {
    throw ConfigError(where + ".mode: expected auto, linear or log, got '" + mode + "'");
  }
  return g;
}

json grid_json(const GridSpec& g) {
  switch (g.mode) {
    case GridSpec::Mode::Points: return {{"points", g.points}};
    case GridSpec::Mode::Linear: return {{"mode", "linear"}, {"max", g.max}, {"m", g.m}};
    case GridSpec::Mode::Log:
      return {{"mode", "log"}, {"min", g.min}, {"max", g.max}, {"m", g.m}};
    case GridSpec::Mode::Auto: break;
  }
  return {{"mode", "auto"}, {"m", g.m}};
}

Weighting parse_weighting(const std::string& s) {
  if (s == "optimal") return Weighting::OptimalC;
  if (s == "identity") return Weighting::Identity;
  throw ConfigError("ecf.weighting: expected optimal or identity, got '" + s + "'");
}

ScoreVariant parse_score(const std::string& s) {
  if (s == "sensitivity") return ScoreVariant::Sensitivity;
  if (s == "plain") return ScoreVariant::Plain;
  throw ConfigError("stage3.score: expected sensitivity or plain, got '" + s + "'");
}

ExperimentConfig from_json(const json& j) {
  reject_unknown(j, "config", {"system", "noise", "n_samples", "replications", "seed", "threads",
                               "pe", "ecf", "stage3", "output"});
  ExperimentConfig cfg;
  if (!j.contains("system")) throw ConfigError("config: missing 'system'");
  if (!j.contains("noise")) throw ConfigError("config: missing 'noise'");
  cfg.system = parse_system(j.at("system"), "system");

  const json& nj = j.at("noise");
  reject_unknown(nj, "noise", {"kind", "params", "h"});
  cfg.noise.kind = parse_kind(get_as<std::string>(nj, "kind", "noise"));
  cfg.noise.h = nj.contains("h") ? get_as<double>(nj, "h", "noise") : 1.0;
  if (!nj.contains("params")) throw ConfigError("noise: missing 'params'");
  cfg.noise.eta = parse_params(nj.at("params"), cfg.noise.kind, "noise.params");

  read_opt(j, "n_samples", "config", cfg.n_samples);
  read_opt(j, "replications", "config", cfg.replications);
  read_opt(j, "seed", "config", cfg.seed);
  read_opt(j, "threads", "config", cfg.threads);

  if (j.contains("pe")) {
    const json& pj = j.at("pe");
    reject_unknown(pj, "pe", {"max_iter", "tol_g", "burn_in", "rho_stab", "long_ar_order", "init"});
    read_opt(pj, "max_iter", "pe", cfg.pe.max_iter);
    read_opt(pj, "tol_g", "pe", cfg.pe.tol_g);
    read_opt(pj, "burn_in", "pe", cfg.pe.burn_in);
    read_opt(pj, "rho_stab", "pe", cfg.pe.rho_stab);
    read_opt(pj, "long_ar_order", "pe", cfg.pe.long_ar_order);
    if (pj.contains("init")) cfg.pe_init = parse_system(pj.at("init"), "pe.init");
  }
  cfg.system.rho_stab = cfg.pe.rho_stab;
  if (cfg.pe_init) cfg.pe_init->rho_stab = cfg.pe.rho_stab;

  if (j.contains("ecf")) {
    const json& ej = j.at("ecf");
    reject_unknown(ej, "ecf", {"grid", "weighting", "max_iter", "tau", "step_tol",
                               "boundary_margin", "init"});
    if (ej.contains("grid")) cfg.ecf_grid = parse_grid(ej.at("grid"), "ecf.grid");
    if (ej.contains("weighting")) {
      cfg.ecf.weighting = parse_weighting(get_as<std::string>(ej, "weighting", "ecf"));
    }
    read_opt(ej, "max_iter", "ecf", cfg.ecf.max_iter);
    read_opt(ej, "tau", "ecf", cfg.ecf.tau);
    read_opt(ej, "step_tol", "ecf", cfg.ecf.step_tol);
    read_opt(ej, "boundary_margin", "ecf", cfg.ecf.boundary_margin);
    if (ej.contains("init")) cfg.ecf_init = parse_params(ej.at("init"), cfg.noise.kind, "ecf.init");
  }

  if (j.contains("stage3")) {
    const json& sj = j.at("stage3");
    reject_unknown(sj, "stage3", {"enabled", "grid", "score", "max_iter", "tau", "step_tol"});
    read_opt(sj, "enabled", "stage3", cfg.stage3_enabled);
    if (sj.contains("grid")) cfg.stage3_grid = parse_grid(sj.at("grid"), "stage3.grid");
    if (sj.contains("score")) cfg.stage3.score = parse_score(get_as<std::string>(sj, "score", "stage3"));
    read_opt(sj, "max_iter", "stage3", cfg.stage3.max_iter);
    read_opt(sj, "tau", "stage3", cfg.stage3.tau);
    read_opt(sj, "step_tol", "stage3", cfg.stage3.step_tol);
  }
  cfg.stage3.burn_in = cfg.pe.burn_in;

  if (j.contains("output")) {
    const json& oj = j.at("output");
    reject_unknown(oj, "output", {"dir"});
    read_opt(oj, "dir", "output", cfg.out_dir);
  }
  return cfg;
}

}  // namespace

FrequencyGrid build_grid(const GridSpec& spec, const NoiseParams& model) {
  switch (spec.mode) {
    case GridSpec::Mode::Points: return FrequencyGrid::from_unsorted(to_vector(spec.points));
    case GridSpec::Mode::Linear: return linear_grid(spec.max, spec.m);
    case GridSpec::Mode::Log: return log_grid(spec.min, spec.max, spec.m);
    case GridSpec::Mode::Auto: break;
  }
  if (spec.m < 1) throw ConfigError("grid: m must be >= 1");
  return default_grid(model, spec.m);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto sys_eq = [](const SystemParams& x, const SystemParams& y) {
    return same(x.ar, y.ar) && same(x.ma, y.ma) && x.rho_stab == y.rho_stab;
  };
  const bool pe_init_eq = a.pe_init.has_value() == b.pe_init.has_value() &&
                          (!a.pe_init || sys_eq(*a.pe_init, *b.pe_init));
  const bool ecf_init_eq = a.ecf_init.has_value() == b.ecf_init.has_value() &&
                           (!a.ecf_init || same(*a.ecf_init, *b.ecf_init));
  return sys_eq(a.system, b.system) && a.noise.kind == b.noise.kind &&
         same(a.noise.eta, b.noise.eta) && a.noise.h == b.noise.h && a.n_samples == b.n_samples &&
         a.replications == b.replications && a.seed == b.seed && a.threads == b.threads &&
         a.pe.max_iter == b.pe.max_iter && a.pe.tol_g == b.pe.tol_g &&
         a.pe.burn_in == b.pe.burn_in && a.pe.rho_stab == b.pe.rho_stab &&
         a.pe.long_ar_order == b.pe.long_ar_order && pe_init_eq && a.ecf_grid == b.ecf_grid &&
         a.ecf.weighting == b.ecf.weighting && a.ecf.max_iter == b.ecf.max_iter &&
         a.ecf.tau == b.ecf.tau && a.ecf.step_tol == b.ecf.step_tol &&
         a.ecf.boundary_margin == b.ecf.boundary_margin && ecf_init_eq &&
         a.stage3_enabled == b.stage3_enabled && a.stage3_grid == b.stage3_grid &&
         a.stage3.score == b.stage3.score && a.stage3.max_iter == b.stage3.max_iter &&
         a.stage3.tau == b.stage3.tau && a.stage3.step_tol == b.stage3.step_tol &&
         a.stage3.burn_in == b.stage3.burn_in && a.out_dir == b.out_dir;
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.noise);
  const Eigen::Index p = cfg.system.dim();
  if (p == 0) throw ConfigError("system: at least one ar or ma coefficient is required");
  require_stable(cfg.system);
  require_inverse_stable(cfg.system);
  if (cfg.pe.burn_in < 0) throw ConfigError("pe.burn_in must be >= 0");
  if (cfg.n_samples <= cfg.pe.burn_in + 10 * p) {
    throw ConfigError("n_samples must exceed burn_in + 10 p = " +
                      std::to_string(cfg.pe.burn_in + 10 * p));
  }
  if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  if (cfg.noise.kind == NoiseKind::CgmyCfOnly) {
    throw ConfigError("noise: CgmyCfOnly has no sampler and cannot drive a simulation");
  }
  if (cfg.pe_init) {
    if (cfg.pe_init->ar.size() != cfg.system.ar.size() ||
        cfg.pe_init->ma.size() != cfg.system.ma.size()) {
      throw ConfigError("pe.init: orders must match the system");
    }
    require_stable(*cfg.pe_init);
    require_inverse_stable(*cfg.pe_init);
  }
  if (cfg.ecf_init) validate(cfg.noise.with_eta(*cfg.ecf_init));
  (void)build_grid(cfg.ecf_grid, cfg.noise);
  if (cfg.stage3_enabled) (void)build_grid(cfg.stage3_grid, cfg.noise);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["system"] = system_json(cfg.system);
  j["noise"] = {{"kind", std::string(to_string(cfg.noise.kind))},
                {"params", params_json(cfg.noise.kind, cfg.noise.eta)},
                {"h", cfg.noise.h}};
  j["n_samples"] = cfg.n_samples;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  json pe = {{"max_iter", cfg.pe.max_iter},
             {"tol_g", cfg.pe.tol_g},
             {"burn_in", cfg.pe.burn_in},
             {"rho_stab", cfg.pe.rho_stab},
             {"long_ar_order", cfg.pe.long_ar_order}};
  if (cfg.pe_init) pe["init"] = system_json(*cfg.pe_init);
  j["pe"] = pe;
  json ecf = {{"grid", grid_json(cfg.ecf_grid)},
              {"weighting", cfg.ecf.weighting == Weighting::OptimalC ? "optimal" : "identity"},
              {"max_iter", cfg.ecf.max_iter},
              {"tau", cfg.ecf.tau},
              {"step_tol", cfg.ecf.step_tol},
              {"boundary_margin", cfg.ecf.boundary_margin}};
  if (cfg.ecf_init) ecf["init"] = params_json(cfg.noise.kind, *cfg.ecf_init);
  j["ecf"] = ecf;
  j["stage3"] = {{"enabled", cfg.stage3_enabled},
                 {"grid", grid_json(cfg.stage3_grid)},
                 {"score", cfg.stage3.score == ScoreVariant::Sensitivity ? "sensitivity" : "plain"},
                 {"max_iter", cfg.stage3.max_iter},
                 {"tau", cfg.stage3.tau},
                 {"step_tol", cfg.stage3.step_tol}};
  j["output"] = {{"dir", cfg.out_dir}};
  return j.dump(2);
}

}  // namespace levy_sysid
