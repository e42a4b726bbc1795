#pragma once

// Calibration objective: RMSE between experimental and simulated stresses at
// phase-matched stations on two stable cycles, plus a weighted penalty on the
// cycle-2-to-3 endpoint drift of the simulation.

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpbo/bounds.hpp"
#include "cpbo/polycrystal.hpp"

namespace cpbo {

struct ExperimentalCycles {
  double amplitude = 0.0;
  StressStrainCurve curve;
  std::array<CycleMarks, 2> cycles;
};

struct ObjectiveConfig {
  double lambda = 0.5;
  int n_points = 44;
  double penalty = 500.0;  // MPa, returned for failed simulations
  int sim_cycles = 3;

  void validate() const;
};

/// Simulates one strain amplitude for a parameter set.
using Simulator = std::function<PolycrystalRun(const MaterialParams&, double amplitude)>;

struct CalibrationCase {
  std::vector<ExperimentalCycles> cases;
  Bounds bounds = Bounds::calibration_default();
};

/// Selects two consecutive complete cycles. `first_cycle` is 1-based; by
/// default the middle pair, (N - 1) / 2 + 1 and the one after it.
ExperimentalCycles experiment_from_curve(const StressStrainCurve& curve,
                                         std::optional<int> first_cycle = std::nullopt);

/// Reads `time_s,strain,stress_mpa[,cycle]` and keeps two consecutive cycles.
ExperimentalCycles load_experiment(std::istream& is, std::optional<int> first_cycle = std::nullopt);
ExperimentalCycles load_experiment(const std::string& path,
                                   std::optional<int> first_cycle = std::nullopt);

struct StressPair {
  double exp = 0.0;
  double sim = 0.0;
};

/// Stations are spread over the four quarter branches (n_points / 4 each) at
/// local phases (j + 0.5) / m, alternating between the two cycles, and are
/// compared with the simulation's last two complete cycles.
std::vector<StressPair> sample_comparison_points(const ExperimentalCycles& exp,
                                                 const StressStrainCurve& sim, int n_points);

double rmse(const std::vector<StressPair>& pairs);

struct ObjectiveBreakdown {
  double rmse = 0.0;
  double dmax32 = 0.0;
  double dmin32 = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  bool failed = false;
};

ObjectiveBreakdown objective_breakdown(const ExperimentalCycles& exp, const PolycrystalRun& run,
                                       const ObjectiveConfig& cfg);

double objective_value(const ExperimentalCycles& exp, const PolycrystalRun& run,
                       const ObjectiveConfig& cfg);

/// Mean of the per-case objectives; simulator exceptions count as failures.
double multi_case_objective(const CalibrationCase& calib, const MaterialParams& params,
                            const Simulator& simulator, const ObjectiveConfig& cfg,
                            std::vector<ObjectiveBreakdown>* breakdown = nullptr);

/// Simulator backed by run_uniaxial on a fixed ensemble; only the amplitude
/// of `program` changes between cases.
Simulator taylor_simulator(std::shared_ptr<const Ensemble> ensemble, LoadingProgram program,
                           HomogenizationOptions options = {});

/// Runs the simulator and keeps its last two cycles as a target curve.
ExperimentalCycles pseudo_experiment(const Simulator& simulator, const MaterialParams& params,
                                     double amplitude);

void write_breakdown_csv(std::ostream& os, const std::vector<ObjectiveBreakdown>& rows,
                         const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
