#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "cpbo/microstructure.hpp"
#include "cpbo/polycrystal.hpp"

namespace cpbo::testing {

/// Stress as a function of (cycle, quarter, local phase u in [0, 1], strain).
using StressFn = std::function<double(int, int, double, double)>;

/// Curve on the triangular waveform of `program` with a prescribed stress.
inline StressStrainCurve synthetic_curve(const LoadingProgram& program, const StressFn& stress) {
  const Waveform w = triangular_waveform(program);
  const double lead = program.lead_in_duration();
  const double qd = program.quarter_duration();
  StressStrainCurve c;
  for (std::size_t i = 0; i < w.time.size(); ++i) {
    const int cycle = w.cycle_index[i];
    double s = 0.0;
    if (cycle > 0) {
      const double t_rel = w.time[i] - lead - (cycle - 1) * program.period();
      int q = std::clamp(static_cast<int>(std::floor(t_rel / qd + 1e-9)), 0, 3);
      double u = t_rel / qd - q;
      if (u < 1e-9 && i > 0 && w.cycle_index[i - 1] == cycle) {
        // A sample on a quarter boundary closes the previous quarter.
        if (q > 0) {
          --q;
          u = 1.0;
        }
      }
      s = stress(cycle, q, std::clamp(u, 0.0, 1.0), w.strain[i]);
    }
    c.push_back(w.time[i], w.strain[i], s, cycle);
  }
  return c;
}

/// Linear-elastic response sigma = E * strain, plus a per-cycle offset at the peaks/valleys.
inline StressStrainCurve elastic_curve(const LoadingProgram& program, double modulus) {
  return synthetic_curve(program, [modulus](int, int, double, double e) { return modulus * e; });
}

/// Single grain with the given orientation and unit volume fraction.
inline Ensemble single_grain(const Orientation& o = Orientation::cube()) {
  Ensemble e;
  GrainRecord g;
  g.id = 1;
  g.orientation = o;
  g.diameter_3d = 30.0;
  g.volume_fraction = 1.0;
  e.grains.push_back(g);
  return e;
}

}  // namespace cpbo::testing
