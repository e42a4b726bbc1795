#include "cpbo/polycrystal.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cpbo/parallel.hpp"

namespace cpbo {

void LoadingProgram::validate() const {
  if (!(amplitude > 0.0)) throw InvalidArgument("loading: amplitude must be positive");
  if (!(r_ratio < 1.0)) throw InvalidArgument("loading: R ratio must be below 1");
  if (!(rate >= 0.005 && rate <= 0.1)) throw InvalidArgument("loading: rate must lie in [0.005, 0.1] 1/s");
  if (cycles < 1) throw InvalidArgument("loading: need at least one cycle");
  if (steps_per_quarter < 1) throw InvalidArgument("loading: steps_per_quarter must be positive");
}

void StressStrainCurve::push_back(double t, double e, double s, int cycle) {
  time.push_back(t);
  strain.push_back(e);
  stress.push_back(s);
  cycle_index.push_back(cycle);
}

void StressStrainCurve::validate() const {
  const std::size_t n = time.size();
  if (strain.size() != n || stress.size() != n || cycle_index.size() != n) {
    throw InvalidArgument("curve arrays differ in length");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(time[i] > time[i - 1])) throw InvalidArgument("curve time is not strictly increasing");
    if (cycle_index[i] < cycle_index[i - 1]) throw InvalidArgument("curve cycle index decreases");
  }
}

Waveform triangular_waveform(const LoadingProgram& program) {
  program.validate();
  Waveform w;
  const double mid = program.mid_strain();
  const double peak = program.amplitude;
  const double valley = program.valley_strain();
  const double quarter_travel = 0.5 * program.amplitude * (1.0 - program.r_ratio);

  double t = 0.0;
  double e = 0.0;
  w.time.push_back(0.0);
  w.strain.push_back(0.0);
  w.cycle_index.push_back(mid == 0.0 ? 1 : 0);

  auto ramp = [&](double target, int steps, int cycle) {
    const double t0 = t;
    const double e0 = e;
    const double t1 = t0 + std::abs(target - e0) / program.rate;
    for (int k = 1; k <= steps; ++k) {
      const double f = static_cast<double>(k) / steps;
      w.time.push_back(k == steps ? t1 : t0 + f * (t1 - t0));
      w.strain.push_back(k == steps ? target : e0 + f * (target - e0));
      w.cycle_index.push_back(cycle);
    }
    t = t1;
    e = target;
  };

  if (mid != 0.0) {
    const int steps = std::max(
        1, static_cast<int>(std::ceil(program.steps_per_quarter * std::abs(mid) / quarter_travel)));
    ramp(mid, steps, 0);
  }
  for (int c = 1; c <= program.cycles; ++c) {
    ramp(peak, program.steps_per_quarter, c);
    ramp(mid, program.steps_per_quarter, c);
    ramp(valley, program.steps_per_quarter, c);
    ramp(mid, program.steps_per_quarter, c);
  }
  return w;
}

std::pair<double, double> CycleMarks::quarter(int q) const {
  switch (q) {
    case 0:
      return {t_start, t_peak};
    case 1:
      return {t_peak, t_fall};
    case 2:
      return {t_fall, t_valley};
    case 3:
      return {t_valley, t_end};
    default:
      throw InvalidArgument("quarter index must lie in [0, 4)");
  }
}

namespace {

// Time at which strain crosses `level` between samples i0 and i1 going in
// direction `rising`; nullopt when it does not.
std::optional<double> crossing_time(const StressStrainCurve& c, std::size_t i0, std::size_t i1,
                                    double level, bool rising) {
  auto reached = [&](double s) { return rising ? s >= level : s <= level; };
  if (reached(c.strain[i0])) return c.time[i0];
  for (std::size_t j = i0 + 1; j <= i1 && j < c.size(); ++j) {
    if (reached(c.strain[j])) {
      const double s0 = c.strain[j - 1];
      const double s1 = c.strain[j];
      const double f = (s1 == s0) ? 1.0 : (level - s0) / (s1 - s0);
      return c.time[j - 1] + f * (c.time[j] - c.time[j - 1]);
    }
  }
  return std::nullopt;
}

}  // namespace

CycleSegmentation segment_cycles(const StressStrainCurve& curve, double hysteresis) {
  CycleSegmentation seg;
  const std::size_t n = curve.size();
  if (n < 3) return seg;
  const auto [mn, mx] = std::minmax_element(curve.strain.begin(), curve.strain.end());
  const double thr = hysteresis * (*mx - *mn);
  if (!(thr > 0.0)) return seg;

  std::vector<std::size_t> peaks;
  std::vector<std::size_t> valleys;
  int dir = 0;
  std::size_t ext = 0;
  std::size_t imax = 0;
  std::size_t imin = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double s = curve.strain[i];
    if (dir == 0) {
      if (s > curve.strain[imax]) imax = i;
      if (s < curve.strain[imin]) imin = i;
      if (curve.strain[imax] - curve.strain[imin] > thr) {
        dir = imax > imin ? 1 : -1;
        ext = dir > 0 ? imax : imin;
      }
      continue;
    }
    if (dir > 0) {
      if (s > curve.strain[ext]) {
        ext = i;
      } else if (curve.strain[ext] - s > thr) {
        peaks.push_back(ext);
        dir = -1;
        ext = i;
      }
    } else {
      if (s < curve.strain[ext]) {
        ext = i;
      } else if (s - curve.strain[ext] > thr) {
        valleys.push_back(ext);
        dir = 1;
        ext = i;
      }
    }
  }
  if (peaks.empty() || valleys.empty()) return seg;

  double peak_mean = 0.0;
  for (auto p : peaks) peak_mean += curve.strain[p];
  peak_mean /= static_cast<double>(peaks.size());
  double valley_mean = 0.0;
  for (auto v : valleys) valley_mean += curve.strain[v];
  valley_mean /= static_cast<double>(valleys.size());
  const double mid = 0.5 * (peak_mean + valley_mean);
  seg.mid_strain = mid;

  for (std::size_t k = 0; k < peaks.size(); ++k) {
    const std::size_t p = peaks[k];
    const auto v_it = std::upper_bound(valleys.begin(), valleys.end(), p);
    if (v_it == valleys.end()) break;
    const std::size_t v = *v_it;
    std::size_t prev = 0;
    for (auto vv : valleys) {
      if (vv < p) prev = vv;
    }
    const std::size_t next = (k + 1 < peaks.size()) ? peaks[k + 1] : n - 1;
    const auto rise = crossing_time(curve, prev, p, mid, true);
    const auto fall = crossing_time(curve, p, v, mid, false);
    const auto end = crossing_time(curve, v, next, mid, true);
    if (!rise || !fall || !end) continue;
    // The opening rise must start from below mid (or exactly at it at t0).
    if (prev == 0 && curve.strain[0] > mid + 1e-12 * (*mx - *mn)) continue;
    CycleMarks m;
    m.t_start = *rise;
    m.t_peak = curve.time[p];
    m.t_fall = *fall;
    m.t_valley = curve.time[v];
    m.t_end = *end;
    m.strain_peak = curve.strain[p];
    m.strain_valley = curve.strain[v];
    seg.cycles.push_back(m);
  }
  return seg;
}

double stress_at_time(const StressStrainCurve& curve, double t) {
  const auto& ts = curve.time;
  if (ts.empty()) throw InvalidArgument("stress_at_time: empty curve");
  if (t <= ts.front()) return curve.stress.front();
  if (t >= ts.back()) return curve.stress.back();
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - ts.begin());
  const double f = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
  return curve.stress[j - 1] + f * (curve.stress[j] - curve.stress[j - 1]);
}

double stress_at_phase(const StressStrainCurve& curve, const CycleMarks& cycle, int quarter,
                       double u) {
  const auto [t0, t1] = cycle.quarter(quarter);
  return stress_at_time(curve, t0 + u * (t1 - t0));
}

CycleEndpoints extract_cycle_endpoints(const StressStrainCurve& curve, int cycle_a, int cycle_b) {
  const CycleSegmentation seg = segment_cycles(curve);
  const int n = static_cast<int>(seg.cycles.size());
  if (cycle_a < 1 || cycle_b < 1 || cycle_a > n || cycle_b > n) {
    throw InvalidArgument("extract_cycle_endpoints: curve has " + std::to_string(n) +
                          " complete cycles, requested " + std::to_string(cycle_a) + " and " +
                          std::to_string(cycle_b));
  }
  const CycleMarks& a = seg.cycles[static_cast<std::size_t>(cycle_a - 1)];
  const CycleMarks& b = seg.cycles[static_cast<std::size_t>(cycle_b - 1)];
  CycleEndpoints out;
  out.dmax = stress_at_time(curve, b.t_peak) - stress_at_time(curve, a.t_peak);
  out.dmin_abs = std::abs(stress_at_time(curve, b.t_valley) - stress_at_time(curve, a.t_valley));
  return out;
}

namespace {

Mat3 macro_f(double lateral, double axial) {
  Mat3 f = Mat3::Zero();
  f(0, 0) = lateral;
  f(1, 1) = lateral;
  f(2, 2) = axial;
  return f;
}

}  // namespace

PolycrystalRun run_uniaxial(const Ensemble& ensemble, const MaterialParams& params,
                            const LoadingProgram& program, const HomogenizationOptions& options) {
  params.validate();
  PolycrystalRun run;
  const std::size_t ng = ensemble.grains.size();
  if (ng == 0) throw InvalidArgument("run_uniaxial: empty ensemble");
  double vf_sum = 0.0;
  for (const auto& g : ensemble.grains) vf_sum += g.volume_fraction;
  if (std::abs(vf_sum - 1.0) > 1e-9) {
    throw InvalidArgument("run_uniaxial: volume fractions must sum to 1");
  }

  const SlipSystemSet& systems = fcc_slip_systems();
  const Waveform wave = triangular_waveform(program);

  std::vector<Mat3> rotations(ng);
  std::vector<double> weights(ng);
  for (std::size_t g = 0; g < ng; ++g) {
    rotations[g] = ensemble.grains[g].orientation.matrix();
    weights[g] = ensemble.grains[g].volume_fraction;
  }
  std::vector<MaterialPointState> states(ng);
  std::vector<StepResult> trial(ng);
  std::vector<double> lat_terms(ng);
  std::vector<double> ax_terms(ng);

  run.curve.push_back(wave.time[0], wave.strain[0], 0.0, wave.cycle_index[0]);

  // Elastic-like initial guesses; both are refined by the secant iteration.
  double lateral_ratio = -params.c12 / (params.c11 + params.c12);
  double lateral_stiffness = params.c11 + params.c12;
  double lateral = 1.0;
  double axial_prev = 1.0;

  struct Eval {
    double residual = 0.0;
    double axial_stress = 0.0;
    bool ok = true;
  };

  for (std::size_t i = 1; i < wave.time.size(); ++i) {
    const double dt = wave.time[i] - wave.time[i - 1];
    const double axial = 1.0 + wave.strain[i];

    auto evaluate = [&](double lat) {
      const Mat3 f = macro_f(lat, axial);
      parallel_for(ng, [&](std::size_t g) {
        trial[g] = step(states[g], f, dt, params, systems, rotations[g], options.step);
      });
      Eval ev;
      for (std::size_t g = 0; g < ng; ++g) {
        const StepResult& r = trial[g];
        if (!r.converged || r.cauchy_stress.cwiseAbs().maxCoeff() > options.failure_stress) {
          ev.ok = false;
          return ev;
        }
        lat_terms[g] = weights[g] * 0.5 * (r.cauchy_stress(0, 0) + r.cauchy_stress(1, 1));
        ax_terms[g] = weights[g] * r.cauchy_stress(2, 2);
      }
      ev.residual = order_independent_sum(lat_terms);
      ev.axial_stress = order_independent_sum(ax_terms);
      return ev;
    };

    const double d_axial = axial - axial_prev;
    double x0 = lateral + lateral_ratio * d_axial;
    Eval e0 = evaluate(x0);
    bool accepted = e0.ok && std::abs(e0.residual) < options.tol_lateral;
    double x_acc = x0;
    Eval e_acc = e0;
    if (e0.ok && !accepted) {
      const double max_move = 10.0 * std::abs(d_axial) + 1e-9;
      double x1 = x0 - std::clamp(e0.residual / lateral_stiffness, -max_move, max_move);
      for (int it = 0; it < options.max_lateral_iterations; ++it) {
        const Eval e1 = evaluate(x1);
        if (!e1.ok) {
          e_acc = e1;
          break;
        }
        if (std::abs(e1.residual) < options.tol_lateral) {
          accepted = true;
          x_acc = x1;
          e_acc = e1;
          break;
        }
        const double slope = (e1.residual - e0.residual) / (x1 - x0);
        if (std::isfinite(slope) && slope > 0.0) lateral_stiffness = slope;
        x0 = x1;
        e0 = e1;
        x1 = x1 - std::clamp(e1.residual / lateral_stiffness, -max_move, max_move);
      }
    }
    if (!accepted) {
      run.failed = true;
      run.failure_reason = e_acc.ok ? "lateral stress iteration did not converge"
                                    : "material point failure at t = " + format_double(wave.time[i]);
      break;
    }

    if (d_axial != 0.0) lateral_ratio = (x_acc - lateral) / d_axial;
    lateral = x_acc;
    axial_prev = axial;
    for (std::size_t g = 0; g < ng; ++g) states[g] = trial[g].new_state;
    run.lateral_residual.push_back(std::abs(e_acc.residual));
    run.curve.push_back(wave.time[i], wave.strain[i], e_acc.axial_stress, wave.cycle_index[i]);
  }
  run.per_grain_final = std::move(states);
  return run;
}

void write_curve_csv(std::ostream& os, const StressStrainCurve& curve,
                     const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "time_s,strain,stress_mpa,cycle\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    os << format_double(curve.time[i]) << ',' << format_double(curve.strain[i]) << ','
       << format_double(curve.stress[i]) << ',' << curve.cycle_index[i] << '\n';
  }
}

}  // namespace cpbo
