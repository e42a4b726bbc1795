#pragma once

// Taylor (iso-deformation) polycrystal under a triangular uniaxial strain
// program along the sample z axis, with the mean lateral stress nulled.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cpbo/io.hpp"
#include "cpbo/microstructure.hpp"
#include "cpbo/slip_crystal.hpp"

namespace cpbo {

struct LoadingProgram {
  double amplitude = 0.005;
  double r_ratio = -1.0;
  double rate = 0.01;  // 1/s
  int cycles = 3;
  int steps_per_quarter = 50;

  void validate() const;
  /// Strain midway between the peak and the valley.
  double mid_strain() const { return 0.5 * amplitude * (1.0 + r_ratio); }
  double valley_strain() const { return r_ratio * amplitude; }
  double quarter_duration() const { return 0.5 * amplitude * (1.0 - r_ratio) / rate; }
  double period() const { return 4.0 * quarter_duration(); }
  /// Time spent ramping from zero to the mid strain before cycle 1 (zero when R = -1).
  double lead_in_duration() const { return std::abs(mid_strain()) / rate; }
};

struct StressStrainCurve {
  std::vector<double> time;
  std::vector<double> strain;
  std::vector<double> stress;
  std::vector<int> cycle_index;  // 1-based; 0 marks the lead-in ramp

  std::size_t size() const { return time.size(); }
  void push_back(double t, double e, double s, int cycle);
  /// Throws InvalidArgument when array lengths or orderings are inconsistent.
  void validate() const;
};

struct Waveform {
  std::vector<double> time;
  std::vector<double> strain;
  std::vector<int> cycle_index;
};

/// Piecewise-linear strain history 0 -> mid -> (+A -> R A -> mid) x cycles at
/// constant |rate|, sampled with `steps_per_quarter` increments per quarter.
Waveform triangular_waveform(const LoadingProgram& program);

/// Turning points and mid-strain crossings of each complete cycle. A cycle
/// runs rising-mid -> peak -> falling-mid -> valley -> rising-mid.
struct CycleMarks {
  double t_start = 0.0;
  double t_peak = 0.0;
  double t_fall = 0.0;
  double t_valley = 0.0;
  double t_end = 0.0;
  double strain_peak = 0.0;
  double strain_valley = 0.0;

  /// Start and end time of quarter q in [0, 4).
  std::pair<double, double> quarter(int q) const;
};

struct CycleSegmentation {
  std::vector<CycleMarks> cycles;
  double mid_strain = 0.0;
};

/// Detects cycles from strain-rate sign changes. Reversals smaller than
/// `hysteresis` times the strain range are ignored.
CycleSegmentation segment_cycles(const StressStrainCurve& curve, double hysteresis = 0.1);

/// Linear interpolation of stress in time.
double stress_at_time(const StressStrainCurve& curve, double t);

/// Stress at local fraction `u` in [0, 1] of quarter q of a cycle.
double stress_at_phase(const StressStrainCurve& curve, const CycleMarks& cycle, int quarter, double u);

struct CycleEndpoints {
  double dmax = 0.0;      // sigma_b(peak) - sigma_a(peak)
  double dmin_abs = 0.0;  // |sigma_b(valley) - sigma_a(valley)|
};

/// Cycle numbers are 1-based positions among the complete cycles of `curve`.
CycleEndpoints extract_cycle_endpoints(const StressStrainCurve& curve, int cycle_a, int cycle_b);

struct HomogenizationOptions {
  double tol_lateral = 0.1;  // MPa
  int max_lateral_iterations = 40;
  double failure_stress = 1.0e4;  // MPa
  StepOptions step;
};

struct PolycrystalRun {
  StressStrainCurve curve;
  std::vector<MaterialPointState> per_grain_final;
  std::vector<double> lateral_residual;  // |mean lateral stress| per accepted step
  bool failed = false;
  std::string failure_reason;
};

PolycrystalRun run_uniaxial(const Ensemble& ensemble, const MaterialParams& params,
                            const LoadingProgram& program,
                            const HomogenizationOptions& options = {});

void write_curve_csv(std::ostream& os, const StressStrainCurve& curve,
                     const std::optional<Provenance>& prov = std::nullopt);

}  // namespace cpbo
