#include "cpbo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "cpbo/parallel.hpp"

namespace cpbo {

void ObjectiveConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("objective: lambda must be nonnegative");
  if (n_points < 4 || n_points % 4 != 0) {
    throw InvalidArgument("objective: n_points must be a positive multiple of 4");
  }
  if (!(penalty > 0.0)) throw InvalidArgument("objective: penalty must be positive");
  if (sim_cycles < 2) throw InvalidArgument("objective: need at least two simulated cycles");
}

ExperimentalCycles experiment_from_curve(const StressStrainCurve& curve, std::optional<int> first_cycle) {
  curve.validate();
  const CycleSegmentation seg = segment_cycles(curve);
  const int n = static_cast<int>(seg.cycles.size());
  if (n < 2) {
    throw ParseError("experiment has " + std::to_string(n) + " complete cycles; at least 2 are required");
  }
  const int first = first_cycle.value_or((n - 1) / 2 + 1);
  if (first < 1 || first + 1 > n) {
    throw InvalidArgument("experiment: cycles " + std::to_string(first) + " and " +
                          std::to_string(first + 1) + " are not both complete");
  }
  ExperimentalCycles out;
  out.cycles = {seg.cycles[static_cast<std::size_t>(first - 1)], seg.cycles[static_cast<std::size_t>(first)]};
  const double t0 = out.cycles[0].t_start;
  const double t1 = out.cycles[1].t_end;

  // Keep the samples spanning [t0, t1], plus one bracketing sample per side.
  std::size_t lo = 0;
  while (lo + 1 < curve.size() && curve.time[lo + 1] <= t0) ++lo;
  std::size_t hi = curve.size() - 1;
  while (hi > 0 && curve.time[hi - 1] >= t1) --hi;
  for (std::size_t i = lo; i <= hi; ++i) {
    out.curve.push_back(curve.time[i], curve.strain[i], curve.stress[i], curve.cycle_index[i]);
  }

  double amp = 0.0;
  for (const auto& c : out.cycles) amp += 0.5 * (c.strain_peak - c.strain_valley);
  out.amplitude = 0.5 * amp;
  for (const auto& c : out.cycles) {
    const double half = 0.5 * (c.strain_peak - c.strain_valley);
    if (std::abs(half - out.amplitude) > 0.01 * out.amplitude) {
      throw ParseError("experiment: strain extrema of the selected cycles differ by more than 1%");
    }
  }
  return out;
}

ExperimentalCycles load_experiment(std::istream& is, std::optional<int> first_cycle) {
  const CsvTable table = read_csv(is);
  const std::vector<std::string> base = {"time_s", "strain", "stress_mpa"};
  const bool with_cycle = table.header.size() == 4 && table.header[3] == "cycle";
  if (!(table.header == base ||
        (with_cycle && std::equal(base.begin(), base.end(), table.header.begin())))) {
    throw ParseError("experiment CSV: expected header 'time_s,strain,stress_mpa'");
  }
  StressStrainCurve curve;
  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      throw ParseError("line " + std::to_string(row.line) + ": expected " +
                       std::to_string(table.header.size()) + " fields");
    }
    const double t = parse_double(row.fields[0], row.line);
    if (!curve.time.empty() && !(t > curve.time.back())) {
      throw ParseError("line " + std::to_string(row.line) + ": time is not strictly increasing");
    }
    curve.push_back(t, parse_double(row.fields[1], row.line), parse_double(row.fields[2], row.line), 0);
  }
  return experiment_from_curve(curve, first_cycle);
}

ExperimentalCycles load_experiment(const std::string& path, std::optional<int> first_cycle) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open experiment file '" + path + "'");
  return load_experiment(in, first_cycle);
}

std::vector<StressPair> sample_comparison_points(const ExperimentalCycles& exp,
                                                 const StressStrainCurve& sim, int n_points) {
  if (n_points < 4 || n_points % 4 != 0) {
    throw InvalidArgument("sample_comparison_points: n_points must be a positive multiple of 4");
  }
  const CycleSegmentation seg = segment_cycles(sim);
  if (seg.cycles.size() < 2) {
    throw InvalidArgument("sample_comparison_points: simulation has fewer than two complete cycles");
  }
  const std::size_t last = seg.cycles.size() - 1;
  const std::array<const CycleMarks*, 2> sim_cycles = {&seg.cycles[last - 1], &seg.cycles[last]};

  const int per_branch = n_points / 4;
  std::vector<StressPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_points));
  for (int q = 0; q < 4; ++q) {
    for (int j = 0; j < per_branch; ++j) {
      const double u = (j + 0.5) / per_branch;
      const std::size_t c = static_cast<std::size_t>(j % 2);
      pairs.push_back({stress_at_phase(exp.curve, exp.cycles[c], q, u),
                       stress_at_phase(sim, *sim_cycles[c], q, u)});
    }
  }
  return pairs;
}

double rmse(const std::vector<StressPair>& pairs) {
  if (pairs.empty()) throw InvalidArgument("rmse: no pairs");
  double sum = 0.0;
  for (const auto& p : pairs) sum += (p.exp - p.sim) * (p.exp - p.sim);
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

ObjectiveBreakdown objective_breakdown(const ExperimentalCycles& exp, const PolycrystalRun& run,
                                       const ObjectiveConfig& cfg) {
  cfg.validate();
  ObjectiveBreakdown out;
  out.lambda = cfg.lambda;
  if (run.failed) {
    out.failed = true;
    out.objective = cfg.penalty;
    return out;
  }
  try {
    out.rmse = rmse(sample_comparison_points(exp, run.curve, cfg.n_points));
    const int n = static_cast<int>(segment_cycles(run.curve).cycles.size());
    if (n < cfg.sim_cycles) throw InvalidArgument("simulation is missing cycles");
    const CycleEndpoints gap = extract_cycle_endpoints(run.curve, n - 1, n);
    out.dmax32 = gap.dmax;
    out.dmin32 = gap.dmin_abs;
  } catch (const InvalidArgument&) {
    out.failed = true;
    out.objective = cfg.penalty;
    return out;
  }
  out.objective = out.rmse + cfg.lambda * (std::abs(out.dmax32) + out.dmin32) / 2.0;
  if (!std::isfinite(out.objective)) {
    out.failed = true;
    out.objective = cfg.penalty;
  }
  return out;
}

double objective_value(const ExperimentalCycles& exp, const PolycrystalRun& run, const ObjectiveConfig& cfg) {
  return objective_breakdown(exp, run, cfg).objective;
}

double multi_case_objective(const CalibrationCase& calib, const MaterialParams& params,
                            const Simulator& simulator, const ObjectiveConfig& cfg,
                            std::vector<ObjectiveBreakdown>* breakdown) {
  if (calib.cases.empty()) throw InvalidArgument("multi_case_objective: no cases");
  cfg.validate();
  std::vector<ObjectiveBreakdown> rows(calib.cases.size());
  parallel_for(calib.cases.size(), [&](std::size_t i) {
    const ExperimentalCycles& exp = calib.cases[i];
    try {
      rows[i] = objective_breakdown(exp, simulator(params, exp.amplitude), cfg);
    } catch (const Error&) {
      rows[i] = ObjectiveBreakdown{};
      rows[i].failed = true;
      rows[i].lambda = cfg.lambda;
      rows[i].objective = cfg.penalty;
    }
  });
  double sum = 0.0;
  for (const auto& r : rows) sum += r.objective;
  if (breakdown) breakdown->insert(breakdown->end(), rows.begin(), rows.end());
  return sum / static_cast<double>(rows.size());
}

Simulator taylor_simulator(std::shared_ptr<const Ensemble> ensemble, LoadingProgram program,
                           HomogenizationOptions options) {
  if (!ensemble) throw InvalidArgument("taylor_simulator: ensemble is required");
  return [ensemble, program, options](const MaterialParams& params, double amplitude) {
    LoadingProgram p = program;
    p.amplitude = amplitude;
    return run_uniaxial(*ensemble, params, p, options);
  };
}

ExperimentalCycles pseudo_experiment(const Simulator& simulator, const MaterialParams& params,
                                     double amplitude) {
  const PolycrystalRun run = simulator(params, amplitude);
  if (run.failed) throw Error("pseudo-experiment simulation failed: " + run.failure_reason);
  const int n = static_cast<int>(segment_cycles(run.curve).cycles.size());
  return experiment_from_curve(run.curve, n - 1);
}

void write_breakdown_csv(std::ostream& os, const std::vector<ObjectiveBreakdown>& rows,
                         const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "case,rmse_mpa,dmax32_mpa,dmin32_mpa,lambda,objective_mpa,failed\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << format_double(r.rmse) << ',' << format_double(r.dmax32) << ','
       << format_double(r.dmin32) << ',' << format_double(r.lambda) << ','
       << format_double(r.objective) << ',' << (r.failed ? 1 : 0) << '\n';
  }
}

}  // namespace cpbo
