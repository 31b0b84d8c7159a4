#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levy_sysid/ecf_iid.hpp"
#include "levy_sysid/ecf_system.hpp"
#include "levy_sysid/linear_system.hpp"
#include "levy_sysid/noise_models.hpp"
#include "levy_sysid/pe_estimator.hpp"

namespace levy_sysid {

/// How a frequency grid is described in a config.
///   {"mode": "auto", "m": 10}                       default_grid of the configured noise law
///   {"points": [0.5, 1.0, ...]}                     explicit
///   {"mode": "linear", "max": 20, "m": 40}          linear_grid
///   {"mode": "log", "min": 0.1, "max": 20, "m": 8}  log_grid
struct GridSpec {
  enum class Mode { Auto, Points, Linear, Log };
  Mode mode = Mode::Auto;
  Eigen::Index m = 10;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> points;

  bool operator==(const GridSpec&) const = default;
};

/// Grids are designed once from the configured (true) noise law and then
/// held fixed across replications.
FrequencyGrid build_grid(const GridSpec& spec, const NoiseParams& model);

struct ExperimentConfig {
  SystemParams system;
  NoiseParams noise;
  Eigen::Index n_samples = 50000;  // includes the burn-in
  int replications = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  PeOptions pe;                      // pe.burn_in is shared by all stages
  std::optional<SystemParams> pe_init;  // default: long-AR initializer

  GridSpec ecf_grid;
  EcfOptions ecf;
  std::optional<Eigen::VectorXd> ecf_init;  // default: configured eta

  bool stage3_enabled = true;
  GridSpec stage3_grid{GridSpec::Mode::Auto, 40};
  Stage3Options stage3;

  std::string out_dir = "out";
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// Checks ranges, dimensions and stability. Throws ConfigError, DomainError
/// or StabilityError.
void validate(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);  // IoError if unreadable
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace levy_sysid
