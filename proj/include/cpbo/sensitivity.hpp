#pragma once

// Shapley-value sensitivity of GP surrogates fitted to curve probes of
// simulated runs. Attributions are exact: all 2^d coalitions are enumerated
// with an interventional (marginal) value function.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cpbo/gp_surrogate.hpp"
#include "cpbo/objective.hpp"

namespace cpbo {

enum class ProbeTarget {
  kStressAtPeakTension,
  kStressMidUnloading,
  kStressAtPeakCompression,
  kStressMidLoading,
  kGapMax32,
  kGapMin32Abs,
};

inline constexpr std::array<ProbeTarget, 6> kAllProbeTargets = {
    ProbeTarget::kStressAtPeakTension, ProbeTarget::kStressMidUnloading,
    ProbeTarget::kStressAtPeakCompression, ProbeTarget::kStressMidLoading,
    ProbeTarget::kGapMax32, ProbeTarget::kGapMin32Abs};

std::string_view to_string(ProbeTarget target);
ProbeTarget parse_probe_target(std::string_view name);

/// Probe value on a stress-strain curve. Stress probes use the final complete
/// cycle: the peaks are the quarter ends, the mid points are the half-way
/// phases of the unloading and reloading branches. Gap probes compare the
/// last two complete cycles.
double extract_probe(const StressStrainCurve& curve, ProbeTarget target);
double extract_probe(const PolycrystalRun& run, ProbeTarget target);

using ScalarModel = std::function<double(const Eigen::VectorXd&)>;

/// Exact Shapley attributions of model(x) against a background set (rows).
std::vector<double> shapley_values(const ScalarModel& model, const Eigen::VectorXd& x,
                                   const Eigen::MatrixXd& background);
std::vector<double> shapley_values(const GpModel& model, const Eigen::VectorXd& x,
                                   const Eigen::MatrixXd& background);

/// Mean model output over the background rows.
double shap_baseline(const ScalarModel& model, const Eigen::MatrixXd& background);

struct SensitivitySample {
  ParamVector params{};
  std::array<double, kAllProbeTargets.size()> probes{};
};

/// Simulates each design row and keeps the successful runs.
std::vector<SensitivitySample> build_sensitivity_dataset(const Eigen::MatrixXd& design,
                                                         const Simulator& simulator, double amplitude);

struct SensitivityOptions {
  Bounds bounds = Bounds::calibration_default();
  double holdout_fraction = 0.3;
  std::size_t max_background = 100;
  std::uint64_t seed = 0;
  int gp_restarts = 8;
};

struct ShapReport {
  ProbeTarget target = ProbeTarget::kGapMax32;
  bool skipped = false;
  std::string diagnostic;
  double r2_holdout = 0.0;
  double baseline = 0.0;
  std::vector<ParamVector> features;
  std::vector<ParamVector> shap;
  std::vector<double> predictions;
  ParamVector mean_abs{};
  /// Parameter indices ordered by decreasing mean |phi|.
  std::array<std::size_t, kNumParams> ranking{};

  /// 1-based rank of a parameter in `ranking`.
  std::size_t rank_of(std::size_t param) const;
};

std::vector<ShapReport> sensitivity_study(const std::vector<SensitivitySample>& dataset,
                                          std::span<const ProbeTarget> targets,
                                          const SensitivityOptions& options = {});

void write_shap_csv(std::ostream& os, const std::vector<ShapReport>& reports,
                    const std::optional<Provenance>& prov = std::nullopt);

/// One line per target: held-out R2, baseline and mean |phi| per parameter.
void write_shap_summary_csv(std::ostream& os, const std::vector<ShapReport>& reports,
                            const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
