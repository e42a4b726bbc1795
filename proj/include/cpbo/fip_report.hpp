#pragma once

// Per-grain fatigue indicator (accumulated plastic work W) analytics and the
// failure-site report: twin adjacency, size and GND distribution ranks,
// average misorientation and Schmid factor of the grain with the largest W.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpbo/gnd_field.hpp"
#include "cpbo/microstructure.hpp"
#include "cpbo/polycrystal.hpp"

namespace cpbo {

struct GrainFipRecord {
  int grain_id = 0;
  double w_max = 0.0;  // MPa; for Taylor grains the grain's accumulated W
  bool is_twin_adjacent = false;
  double diameter_3d = 0.0;
  double schmid = 0.0;
  double avg_misorientation = 0.0;  // degrees
  std::optional<double> gnd_density;  // 1/um^2, present only when a voxel field was analyzed
};

/// One record per grain, in ensemble order. `gnd_density`, when given, holds
/// one optional value per grain in the same order.
std::vector<GrainFipRecord> collect_fip(const PolycrystalRun& run, const Ensemble& ensemble,
                                        const Vec3& loading_axis = Vec3::UnitZ(),
                                        std::span<const std::optional<double>> gnd_density = {});

struct FailureReport {
  std::string ensemble_id;
  GrainFipRecord critical;
  double cdf_diameter = 0.0;
  std::optional<double> cdf_gnd;
};

/// The critical grain has the largest w_max; ties go to the lowest grain id.
FailureReport failure_report(const std::vector<GrainFipRecord>& records, std::string ensemble_id);

struct LognormalFit {
  double mu_log = 0.0;
  double sigma_log = 0.0;
};

/// Mean and sample standard deviation of ln(values); values must be positive.
LognormalFit fit_lognormal(std::span<const double> values);

/// The k largest w_max values, descending.
std::vector<double> top_w(const std::vector<GrainFipRecord>& records, std::size_t k);

/// Voronoi voxelization of the grain centres on a res^3 grid over the unit
/// cube, scaled so the box volume equals the total sphere volume of the
/// grains. Each voxel carries its grain's final F^p in the sample frame.
struct SyntheticField {
  VoxelField field{{2, 2, 2}, 1.0};
  std::vector<std::size_t> owner;  // grain index per voxel
  std::vector<Mat3> rotations;     // crystal-to-sample rotation per voxel
};

SyntheticField voxelize_run(const Ensemble& ensemble, const PolycrystalRun& run, int resolution);

/// Per-grain mean over its voxels of the total GND density (edge + screw,
/// all systems). Grains that own no voxel get no value.
std::vector<std::optional<double>> grain_gnd_density(const Ensemble& ensemble, const PolycrystalRun& run,
                                                     int resolution, double burgers);

struct TwinComparisonOptions {
  double twin_target = 0.45;
  std::size_t top_k = 150;
  std::uint64_t seed = 0;
  /// Voxel resolution of the GND pathway; 0 disables it.
  int gnd_resolution = 0;
  HomogenizationOptions homogenization;
};

struct TwinComparison {
  Ensemble twinned;
  PolycrystalRun base_run;
  PolycrystalRun twinned_run;
  std::vector<GrainFipRecord> base_records;
  std::vector<GrainFipRecord> twinned_records;
  LognormalFit base_fit;
  LognormalFit twinned_fit;
  double max_curve_difference = 0.0;  // MPa
  double peak_stress = 0.0;           // max |stress| of the base curve, MPa
  FailureReport base_report;
  FailureReport twinned_report;

  double relative_curve_difference() const { return max_curve_difference / peak_stress; }
};

/// Runs the same program on a twin-free ensemble and on a copy with twins
/// inserted, and compares the macroscopic curves and top-k W distributions.
TwinComparison compare_twinned(const Ensemble& base, const MaterialParams& params,
                               const LoadingProgram& program, const TwinComparisonOptions& options = {});

/// Table row schema: `ensemble,twin_boundary,gnd_cdf,diameter_cdf,avg_misorientation_deg,schmid`.
void write_failure_csv(std::ostream& os, const std::vector<FailureReport>& reports,
                       const std::optional<Provenance>& prov = std::nullopt);

void write_fip_csv(std::ostream& os, const std::vector<GrainFipRecord>& records,
                   const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
