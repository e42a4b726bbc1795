#pragma once

// Command-line workflows. A run is driven by one JSON config file whose
// sections are validated (unknown keys rejected) before any computation.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpbo/bounds.hpp"
#include "cpbo/microstructure.hpp"
#include "cpbo/objective.hpp"
#include "cpbo/polycrystal.hpp"
#include "cpbo/sensitivity.hpp"

namespace cpbo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitSimulation = 2;

/// A calibration target: either a measured curve file or a pseudo-experiment
/// simulated with the config's material parameters.
struct ExperimentSpec {
  std::optional<std::filesystem::path> file;
  std::optional<int> first_cycle;
  double pseudo_amplitude = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";
  std::string config_hash;

  SizeStats size_stats;
  int n_grains = 300;
  double twin_target = 0.0;
  std::optional<std::filesystem::path> ensemble_file;

  LoadingProgram loading;
  HomogenizationOptions homogenization;
  MaterialParams material;
  ObjectiveConfig objective;
  Bounds bounds = Bounds::calibration_default();

  std::vector<ExperimentSpec> experiments;
  int n_initial = 50;
  int budget = 75;
  int candidates = 4096;
  int gp_restarts = 8;
  int drop_best_initial = 0;

  int sensitivity_samples = 100;
  std::vector<ProbeTarget> sensitivity_targets{kAllProbeTargets.begin(), kAllProbeTargets.end()};
  double holdout_fraction = 0.3;
  int max_background = 100;

  double report_twin_target = 0.45;
  int report_top_k = 150;
  int gnd_resolution = 0;

  Provenance provenance() const { return {seed, config_hash}; }
};

/// Parses and validates a config document. Relative paths are resolved
/// against `base_dir`. Throws InvalidArgument or ParseError.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Runs `argv[1:]` as a subcommand and returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cpbo
