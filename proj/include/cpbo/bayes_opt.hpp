#pragma once

// Bayesian calibration loop: Latin hypercube seeding, GP surrogate of the
// objective, expected-improvement proposals and penalty handling.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cpbo/gp_surrogate.hpp"
#include "cpbo/objective.hpp"

namespace cpbo {

/// n x d design with exactly one point per stratum in every coordinate.
Eigen::MatrixXd lhs_sample(const Bounds& bounds, int n, std::uint64_t seed);

/// Minimization form: E[max(f_best - f(x), 0)] under the GP posterior.
double expected_improvement(double mean, double sd, double f_best);
double expected_improvement(const GpModel& model, const Eigen::VectorXd& x, double f_best);

struct ProposalOptions {
  int candidates = 4096;
  int polish_starts = 8;
  /// Candidates closer than this (unit-cube distance) to a previous
  /// evaluation are skipped.
  double duplicate_tolerance = 1e-9;
};

/// Maximizes EI over seeded quasi-random candidates, polished by pattern
/// search from the best few. Falls back to the highest-variance candidate
/// when EI vanishes everywhere. The result lies strictly inside `bounds`.
std::vector<double> propose_next(const GpModel& model, const Bounds& bounds, double f_best,
                                 std::uint64_t seed, const ProposalOptions& options = {});

enum class Phase { kInitial, kBo };
std::string_view to_string(Phase phase);

struct HistoryRow {
  int iter = 0;
  Phase phase = Phase::kInitial;
  ParamVector params{};
  double objective = 0.0;
  bool failed = false;
};

struct BOHistory {
  std::vector<HistoryRow> rows;

  std::vector<double> best_so_far() const;
  /// Index of the first row attaining the minimum objective.
  std::size_t best_index() const;
};

struct BOConfig {
  int n_initial = 50;
  int budget = 75;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  ProposalOptions proposal;
  int gp_restarts = 8;
  /// Removes this many of the best initial evaluations before the loop starts.
  int drop_best_initial = 0;

  void validate() const;
};

struct CalibrationResult {
  BOHistory history;
  MaterialParams best;
  double best_objective = 0.0;
};

/// Evaluates the objective at each design row (in parallel). Rows are
/// numbered from `first_iter`.
std::vector<HistoryRow> evaluate_design(const CalibrationCase& calib, const Eigen::MatrixXd& design,
                                        const Simulator& simulator, const ObjectiveConfig& cfg,
                                        Phase phase, int first_iter = 0);

/// Keeps all but the `k` lowest-objective rows (ties broken by position).
std::vector<HistoryRow> drop_best(const std::vector<HistoryRow>& rows, int k);

/// Runs the BO loop from already evaluated initial rows.
CalibrationResult calibrate_from(const CalibrationCase& calib, const BOConfig& cfg,
                                 const Simulator& simulator, std::vector<HistoryRow> initial);

/// LHS phase of `n_initial` points followed by `budget` BO iterations.
CalibrationResult calibrate(const CalibrationCase& calib, const BOConfig& cfg, const Simulator& simulator);

/// Fits the surrogate to a set of evaluated rows.
GpModel fit_history(const std::vector<HistoryRow>& rows, const Bounds& bounds, const GpFitOptions& options);

void write_history_csv(std::ostream& os, const BOHistory& history,
                       const std::optional<Provenance>& prov = std::nullopt);
BOHistory read_history_csv(std::istream& is);

/// Parameter table: `parameter,description,unit,value`.
void write_best_params(std::ostream& os, const MaterialParams& params, double objective,
                       const std::optional<Provenance>& prov = std::nullopt);

/// Reads a table written by write_best_params into a copy of `base`.
MaterialParams read_best_params(std::istream& is, MaterialParams base = {});

/// Per-iteration parameter series plus the derived product C sqrt(rho_SSD).
void write_trajectory_csv(std::ostream& os, const BOHistory& history,
                          const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
