#include "cpbo/sensitivity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cpbo/parallel.hpp"
#include "cpbo/random.hpp"

namespace cpbo {

namespace {

constexpr std::size_t kMaxShapFeatures = 20;

std::vector<double> shapley_weights(std::size_t d) {
  // w(s) = s! (d - s - 1)! / d!
  std::vector<double> w(d);
  for (std::size_t s = 0; s < d; ++s) {
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) +
                    std::lgamma(static_cast<double>(d - s)) - std::lgamma(static_cast<double>(d) + 1.0));
  }
  return w;
}

}  // namespace

std::string_view to_string(ProbeTarget target) {
  switch (target) {
    case ProbeTarget::kStressAtPeakTension:
      return "stress_at_peak_tension";
    case ProbeTarget::kStressMidUnloading:
      return "stress_mid_unloading";
    case ProbeTarget::kStressAtPeakCompression:
      return "stress_at_peak_compression";
    case ProbeTarget::kStressMidLoading:
      return "stress_mid_loading";
    case ProbeTarget::kGapMax32:
      return "gap_max32";
    case ProbeTarget::kGapMin32Abs:
      return "gap_min32_abs";
  }
  return "unknown";
}

ProbeTarget parse_probe_target(std::string_view name) {
  for (ProbeTarget t : kAllProbeTargets) {
    if (to_string(t) == name) return t;
  }
  throw InvalidArgument("unknown probe target '" + std::string(name) + "'");
}

double extract_probe(const StressStrainCurve& curve, ProbeTarget target) {
  const CycleSegmentation seg = segment_cycles(curve);
  const int n = static_cast<int>(seg.cycles.size());
  if (n < 1) throw InvalidArgument("extract_probe: no complete cycle");
  const CycleMarks& last = seg.cycles.back();
  switch (target) {
    case ProbeTarget::kStressAtPeakTension:
      return stress_at_phase(curve, last, 0, 1.0);
    case ProbeTarget::kStressMidUnloading:
      return stress_at_phase(curve, last, 1, 0.5);
    case ProbeTarget::kStressAtPeakCompression:
      return stress_at_phase(curve, last, 2, 1.0);
    case ProbeTarget::kStressMidLoading:
      return stress_at_phase(curve, last, 3, 0.5);
    case ProbeTarget::kGapMax32:
      if (n < 2) throw InvalidArgument("extract_probe: gap targets need two complete cycles");
      return extract_cycle_endpoints(curve, n - 1, n).dmax;
    case ProbeTarget::kGapMin32Abs:
      if (n < 2) throw InvalidArgument("extract_probe: gap targets need two complete cycles");
      return extract_cycle_endpoints(curve, n - 1, n).dmin_abs;
  }
  throw InvalidArgument("extract_probe: unknown target");
}

double extract_probe(const PolycrystalRun& run, ProbeTarget target) {
  if (run.failed) throw InvalidArgument("extract_probe: run failed");
  return extract_probe(run.curve, target);
}

double shap_baseline(const ScalarModel& model, const Eigen::MatrixXd& background) {
  if (background.rows() < 1) throw InvalidArgument("shap: background must be nonempty");
  double sum = 0.0;
  for (Eigen::Index b = 0; b < background.rows(); ++b) sum += model(background.row(b).transpose());
  return sum / static_cast<double>(background.rows());
}

std::vector<double> shapley_values(const ScalarModel& model, const Eigen::VectorXd& x,
                                   const Eigen::MatrixXd& background) {
  const auto d = static_cast<std::size_t>(x.size());
  if (background.rows() < 1) throw InvalidArgument("shap: background must be nonempty");
  if (static_cast<std::size_t>(background.cols()) != d) throw InvalidArgument("shap: background width mismatch");
  if (d == 0 || d > kMaxShapFeatures) throw InvalidArgument("shap: unsupported feature count");

  const std::size_t n_masks = std::size_t{1} << d;
  std::vector<double> value(n_masks);
  Eigen::VectorXd z(x.size());
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    double sum = 0.0;
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        z(ii) = (mask >> i) & 1U ? x(ii) : background(b, ii);
      }
      sum += model(z);
    }
    value[mask] = sum / static_cast<double>(background.rows());
  }

  const std::vector<double> w = shapley_weights(d);
  std::vector<double> phi(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      acc += w[static_cast<std::size_t>(std::popcount(mask))] * (value[mask | bit] - value[mask]);
    }
    phi[i] = acc;
  }
  return phi;
}

std::vector<double> shapley_values(const GpModel& model, const Eigen::VectorXd& x,
                                   const Eigen::MatrixXd& background) {
  return shapley_values([&model](const Eigen::VectorXd& v) { return model.mean(v); }, x, background);
}

std::vector<SensitivitySample> build_sensitivity_dataset(const Eigen::MatrixXd& design,
                                                         const Simulator& simulator, double amplitude) {
  if (static_cast<std::size_t>(design.cols()) != kNumParams) {
    throw InvalidArgument("sensitivity dataset: design must have nine columns");
  }
  const auto n = static_cast<std::size_t>(design.rows());
  std::vector<std::optional<SensitivitySample>> slots(n);
  parallel_for(n, [&](std::size_t i) {
    SensitivitySample s;
    for (std::size_t p = 0; p < kNumParams; ++p) {
      s.params[p] = design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
    }
    try {
      const PolycrystalRun run = simulator(MaterialParams::from_calibrated(s.params), amplitude);
      if (run.failed) return;
      for (std::size_t t = 0; t < kAllProbeTargets.size(); ++t) s.probes[t] = extract_probe(run, kAllProbeTargets[t]);
      slots[i] = s;
    } catch (const Error&) {
      // Failed or unsegmentable runs are left out of the dataset.
    }
  });
  std::vector<SensitivitySample> out;
  for (auto& s : slots) {
    if (s) out.push_back(*s);
  }
  return out;
}

std::size_t ShapReport::rank_of(std::size_t param) const {
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (ranking[r] == param) return r + 1;
  }
  throw InvalidArgument("rank_of: unknown parameter index");
}

std::vector<ShapReport> sensitivity_study(const std::vector<SensitivitySample>& dataset,
                                          std::span<const ProbeTarget> targets,
                                          const SensitivityOptions& options) {
  if (dataset.size() < 30) throw InvalidArgument("sensitivity_study: at least 30 successful simulations are required");
  if (!(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0)) {
    throw InvalidArgument("sensitivity_study: holdout_fraction must lie in (0, 1)");
  }
  if (options.max_background < 1) throw InvalidArgument("sensitivity_study: max_background must be positive");

  const auto n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(kNumParams));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < kNumParams; ++p) {
      x(i, static_cast<Eigen::Index>(p)) = dataset[static_cast<std::size_t>(i)].params[p];
    }
  }

  // Seeded split and background subsample shared by all targets.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(options.seed, 0));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  const auto n_test = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::lround(options.holdout_fraction * n)));
  const Eigen::Index n_train = n - n_test;
  const auto n_bg = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(options.max_background));
  Eigen::MatrixXd background(n_bg, x.cols());
  for (Eigen::Index b = 0; b < n_bg; ++b) background.row(b) = x.row(n_bg == n ? b : perm[static_cast<std::size_t>(b)]);

  std::vector<ShapReport> reports;
  for (ProbeTarget target : targets) {
    const auto t = static_cast<std::size_t>(std::find(kAllProbeTargets.begin(), kAllProbeTargets.end(), target) -
                                            kAllProbeTargets.begin());
    ShapReport rep;
    rep.target = target;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = dataset[static_cast<std::size_t>(i)].probes[t];

    GpFitOptions gp;
    gp.restarts = options.gp_restarts;
    gp.seed = derive_seed(options.seed, 1 + t);
    try {
      Eigen::MatrixXd xtr(n_train, x.cols());
      Eigen::VectorXd ytr(n_train);
      Eigen::MatrixXd xte(n_test, x.cols());
      std::vector<double> yte(static_cast<std::size_t>(n_test));
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = perm[static_cast<std::size_t>(i)];
        if (i < n_train) {
          xtr.row(i) = x.row(src);
          ytr(i) = y(src);
        } else {
          xte.row(i - n_train) = x.row(src);
          yte[static_cast<std::size_t>(i - n_train)] = y(src);
        }
      }
      const GpModel holdout = fit_gp(xtr, ytr, options.bounds, gp);
      const Eigen::VectorXd pred = holdout.predict_mean(xte);
      rep.r2_holdout = r2_score(yte, std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())));

      const GpModel model = fit_gp(x, y, options.bounds, gp);
      if (model.is_constant()) throw InvalidArgument("target is constant");
      const ScalarModel f = [&model](const Eigen::VectorXd& v) { return model.mean(v); };
      rep.baseline = shap_baseline(f, background);
      rep.features.resize(static_cast<std::size_t>(n));
      rep.shap.resize(static_cast<std::size_t>(n));
      rep.predictions.resize(static_cast<std::size_t>(n));
      parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
        const std::vector<double> phi = shapley_values(f, xi, background);
        std::copy(phi.begin(), phi.end(), rep.shap[i].begin());
        rep.features[i] = dataset[i].params;
        rep.predictions[i] = model.mean(xi);
      });
    } catch (const Error& e) {
      rep.skipped = true;
      rep.diagnostic = e.what();
      reports.push_back(rep);
      continue;
    }

    for (std::size_t p = 0; p < kNumParams; ++p) {
      double acc = 0.0;
      for (const auto& row : rep.shap) acc += std::abs(row[p]);
      rep.mean_abs[p] = acc / static_cast<double>(rep.shap.size());
    }
    std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
    std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return rep.mean_abs[a] > rep.mean_abs[b]; });
    reports.push_back(std::move(rep));
  }
  return reports;
}

void write_shap_csv(std::ostream& os, const std::vector<ShapReport>& reports, const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "target,row,param,feature_value,shap_value\n";
  for (const auto& rep : reports) {
    if (rep.skipped) continue;
    for (std::size_t r = 0; r < rep.shap.size(); ++r) {
      for (std::size_t p = 0; p < kNumParams; ++p) {
        os << to_string(rep.target) << ',' << r << ',' << kParamNames[p] << ',' << format_double(rep.features[r][p])
           << ',' << format_double(rep.shap[r][p]) << '\n';
      }
    }
  }
}

void write_shap_summary_csv(std::ostream& os, const std::vector<ShapReport>& reports,
                            const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "target,skipped,r2_holdout,baseline";
  for (auto name : kParamNames) os << ",mean_abs_" << name;
  os << ",diagnostic\n";
  for (const auto& rep : reports) {
    os << to_string(rep.target) << ',' << (rep.skipped ? 1 : 0) << ',' << format_double(rep.r2_holdout) << ','
       << format_double(rep.baseline);
    for (double v : rep.mean_abs) os << ',' << format_double(v);
    std::string diag = rep.diagnostic;
    std::replace(diag.begin(), diag.end(), ',', ';');
    os << ',' << diag << '\n';
  }
}

}  // namespace cpbo
