#include "cpbo/fip_report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "cpbo/parallel.hpp"

namespace cpbo {

namespace {

void write_optional(std::ostream& os, const std::optional<double>& v) {
  if (v) {
    os << format_double(*v);
  } else {
    os << "NA";
  }
}

}  // namespace

std::vector<GrainFipRecord> collect_fip(const PolycrystalRun& run, const Ensemble& ensemble,
                                        const Vec3& loading_axis,
                                        std::span<const std::optional<double>> gnd_density) {
  if (run.failed) throw InvalidArgument("collect_fip: run failed: " + run.failure_reason);
  if (run.per_grain_final.size() != ensemble.grains.size()) {
    throw InvalidArgument("collect_fip: run and ensemble have different grain counts");
  }
  if (!gnd_density.empty() && gnd_density.size() != ensemble.grains.size()) {
    throw InvalidArgument("collect_fip: one GND value per grain is required");
  }
  std::vector<GrainFipRecord> out(ensemble.grains.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const GrainRecord& g = ensemble.grains[i];
    GrainFipRecord& r = out[i];
    r.grain_id = g.id;
    r.w_max = run.per_grain_final[i].w_fip;
    r.is_twin_adjacent = g.is_twin() || std::any_of(g.neighbors.begin(), g.neighbors.end(), [&](int nb) {
                           return ensemble.grain(nb).is_twin();
                         });
    r.diameter_3d = g.diameter_3d;
    r.schmid = schmid_factor(g.orientation, loading_axis);
    r.avg_misorientation = g.neighbors.empty() ? 0.0 : average_misorientation(ensemble, g.id);
    if (!gnd_density.empty()) r.gnd_density = gnd_density[i];
  });
  return out;
}

FailureReport failure_report(const std::vector<GrainFipRecord>& records, std::string ensemble_id) {
  if (records.empty()) throw InvalidArgument("failure_report: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& b = records[best];
    if (r.w_max > b.w_max || (r.w_max == b.w_max && r.grain_id < b.grain_id)) best = i;
  }
  FailureReport rep;
  rep.ensemble_id = std::move(ensemble_id);
  rep.critical = records[best];

  std::vector<double> diameters;
  std::vector<double> gnd;
  for (const auto& r : records) {
    diameters.push_back(r.diameter_3d);
    if (r.gnd_density) gnd.push_back(*r.gnd_density);
  }
  rep.cdf_diameter = EmpiricalCdf(diameters)(rep.critical.diameter_3d);
  if (rep.critical.gnd_density && !gnd.empty()) rep.cdf_gnd = EmpiricalCdf(gnd)(*rep.critical.gnd_density);
  return rep;
}

LognormalFit fit_lognormal(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("fit_lognormal: at least two values are required");
  double sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw InvalidArgument("fit_lognormal: values must be positive");
    sum += std::log(v);
  }
  const double mu = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (std::log(v) - mu) * (std::log(v) - mu);
  return {mu, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<double> top_w(const std::vector<GrainFipRecord>& records, std::size_t k) {
  std::vector<double> w;
  w.reserve(records.size());
  for (const auto& r : records) w.push_back(r.w_max);
  std::sort(w.begin(), w.end(), std::greater<>());
  if (w.size() > k) w.resize(k);
  return w;
}

SyntheticField voxelize_run(const Ensemble& ensemble, const PolycrystalRun& run, int resolution) {
  if (resolution < 2) throw InvalidArgument("voxelize_run: resolution must be at least 2");
  if (run.per_grain_final.size() != ensemble.grains.size()) {
    throw InvalidArgument("voxelize_run: run and ensemble have different grain counts");
  }
  double volume = 0.0;
  for (const auto& g : ensemble.grains) {
    if (!g.center) throw InvalidArgument("voxelize_run: grain " + std::to_string(g.id) + " has no centre");
    volume += std::numbers::pi / 6.0 * g.diameter_3d * g.diameter_3d * g.diameter_3d;
  }
  const double side = std::cbrt(volume);
  SyntheticField out;
  out.field = VoxelField({resolution, resolution, resolution}, side / resolution);
  out.owner.resize(out.field.size());
  out.rotations.resize(out.field.size());

  std::vector<Mat3> rot(ensemble.grains.size());
  std::vector<Mat3> fp_sample(ensemble.grains.size());
  for (std::size_t g = 0; g < rot.size(); ++g) {
    rot[g] = ensemble.grains[g].orientation.matrix();
    fp_sample[g] = rot[g] * run.per_grain_final[g].fp * rot[g].transpose();
  }
  parallel_for(out.field.size(), [&](std::size_t v) {
    const int i = static_cast<int>(v % static_cast<std::size_t>(resolution));
    const int j = static_cast<int>((v / static_cast<std::size_t>(resolution)) % static_cast<std::size_t>(resolution));
    const int k = static_cast<int>(v / (static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution)));
    const Vec3 p((i + 0.5) / resolution, (j + 0.5) / resolution, (k + 0.5) / resolution);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < ensemble.grains.size(); ++g) {
      const double d = (*ensemble.grains[g].center - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = g;
      }
    }
    out.owner[v] = best;
    out.rotations[v] = rot[best];
    out.field.fp[v] = fp_sample[best];
  });
  return out;
}

std::vector<std::optional<double>> grain_gnd_density(const Ensemble& ensemble, const PolycrystalRun& run,
                                                     int resolution, double burgers) {
  const SyntheticField syn = voxelize_run(ensemble, run, resolution);
  const GndResult gnd = analyze_gnd(syn.field, fcc_slip_systems(), burgers, syn.rotations);
  std::vector<double> sum(ensemble.grains.size(), 0.0);
  std::vector<int> count(ensemble.grains.size(), 0);
  for (std::size_t v = 0; v < syn.owner.size(); ++v) {
    double total = 0.0;
    for (std::size_t s = 0; s < kNumSlip; ++s) total += gnd.projection[v].rho_edge[s] + gnd.projection[v].rho_screw[s];
    sum[syn.owner[v]] += total;
    count[syn.owner[v]] += 1;
  }
  std::vector<std::optional<double>> out(ensemble.grains.size());
  for (std::size_t g = 0; g < out.size(); ++g) {
    if (count[g] > 0) out[g] = sum[g] / count[g];
  }
  return out;
}

TwinComparison compare_twinned(const Ensemble& base, const MaterialParams& params,
                               const LoadingProgram& program, const TwinComparisonOptions& options) {
  for (const auto& g : base.grains) {
    if (g.is_twin()) throw InvalidArgument("compare_twinned: base ensemble already contains twins");
  }
  if (options.top_k < 2) throw InvalidArgument("compare_twinned: top_k must be at least 2");
  TwinComparison out;
  out.twinned = add_twins(base, options.twin_target, options.seed);

  std::array<const Ensemble*, 2> ensembles = {&base, &out.twinned};
  std::array<PolycrystalRun*, 2> runs = {&out.base_run, &out.twinned_run};
  parallel_for(2, [&](std::size_t i) {
    *runs[i] = run_uniaxial(*ensembles[i], params, program, options.homogenization);
  });
  if (out.base_run.failed) throw Error("compare_twinned: base run failed: " + out.base_run.failure_reason);
  if (out.twinned_run.failed) throw Error("compare_twinned: twinned run failed: " + out.twinned_run.failure_reason);

  std::array<std::vector<std::optional<double>>, 2> gnd;
  if (options.gnd_resolution > 0) {
    gnd[0] = grain_gnd_density(base, out.base_run, options.gnd_resolution, params.burgers);
    gnd[1] = grain_gnd_density(out.twinned, out.twinned_run, options.gnd_resolution, params.burgers);
  }
  out.base_records = collect_fip(out.base_run, base, Vec3::UnitZ(), gnd[0]);
  out.twinned_records = collect_fip(out.twinned_run, out.twinned, Vec3::UnitZ(), gnd[1]);
  out.base_fit = fit_lognormal(top_w(out.base_records, options.top_k));
  out.twinned_fit = fit_lognormal(top_w(out.twinned_records, options.top_k));

  const StressStrainCurve& a = out.base_run.curve;
  const StressStrainCurve& b = out.twinned_run.curve;
  if (a.size() != b.size()) throw Error("compare_twinned: curves are sampled differently");
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.max_curve_difference = std::max(out.max_curve_difference, std::abs(a.stress[i] - b.stress[i]));
    out.peak_stress = std::max(out.peak_stress, std::abs(a.stress[i]));
  }
  out.base_report = failure_report(out.base_records, "base");
  out.twinned_report = failure_report(out.twinned_records, "twinned");
  return out;
}

void write_failure_csv(std::ostream& os, const std::vector<FailureReport>& reports,
                       const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "ensemble,twin_boundary,gnd_cdf,diameter_cdf,avg_misorientation_deg,schmid\n";
  for (const auto& r : reports) {
    os << r.ensemble_id << ',' << (r.critical.is_twin_adjacent ? "Yes" : "No") << ',';
    write_optional(os, r.cdf_gnd);
    os << ',' << format_double(r.cdf_diameter) << ',' << format_double(r.critical.avg_misorientation) << ','
       << format_double(r.critical.schmid) << '\n';
  }
}

void write_fip_csv(std::ostream& os, const std::vector<GrainFipRecord>& records, const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "grain_id,w_max_mpa,twin_adjacent,diameter_um,schmid,avg_misorientation_deg,gnd_density\n";
  for (const auto& r : records) {
    os << r.grain_id << ',' << format_double(r.w_max) << ',' << (r.is_twin_adjacent ? 1 : 0) << ','
       << format_double(r.diameter_3d) << ',' << format_double(r.schmid) << ','
       << format_double(r.avg_misorientation) << ',';
    write_optional(os, r.gnd_density);
    os << '\n';
  }
}

}  // namespace cpbo
