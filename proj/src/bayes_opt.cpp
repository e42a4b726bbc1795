#include "cpbo/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "cpbo/parallel.hpp"
#include "cpbo/random.hpp"

namespace cpbo {

namespace {

constexpr std::array<int, 16> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
constexpr double kInteriorMargin = 1e-9;

double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double out = 0.0;
  while (i > 0) {
    out += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
    i /= static_cast<std::uint64_t>(base);
    f *= inv;
  }
  return out;
}

// Halton points with a seeded Cranley-Patterson rotation.
Eigen::MatrixXd shifted_halton(int n, std::size_t dim, std::uint64_t seed) {
  if (dim > kPrimes.size()) throw InvalidArgument("propose_next: too many dimensions for Halton candidates");
  Rng rng(seed);
  Eigen::VectorXd shift(static_cast<Eigen::Index>(dim));
  for (auto& v : shift) v = uniform01(rng);
  Eigen::MatrixXd pts(n, static_cast<Eigen::Index>(dim));
  for (int i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      double u = radical_inverse(static_cast<std::uint64_t>(i + 1), kPrimes[d]) + shift(static_cast<Eigen::Index>(d));
      pts(i, static_cast<Eigen::Index>(d)) = u - std::floor(u);
    }
  }
  return pts;
}

Eigen::VectorXd to_interior(Eigen::VectorXd u) {
  return u.cwiseMax(kInteriorMargin).cwiseMin(1.0 - kInteriorMargin);
}

bool near_any(const Eigen::VectorXd& u, const Eigen::MatrixXd& existing, double tol) {
  for (Eigen::Index i = 0; i < existing.rows(); ++i) {
    if ((existing.row(i).transpose() - u).norm() <= tol) return true;
  }
  return false;
}

double ei_at_unit(const GpModel& model, const Bounds& bounds, const Eigen::VectorXd& u, double f_best) {
  const std::vector<double> x = bounds.from_unit(u);
  const GpPrediction p = model.predict(std::span<const double>(x));
  return expected_improvement(p.mean, std::sqrt(p.variance), f_best);
}

// Compass search on EI in the unit cube.
Eigen::VectorXd polish(const GpModel& model, const Bounds& bounds, Eigen::VectorXd u, double& value,
                       double f_best, const Eigen::MatrixXd& existing, double tol) {
  double step = 0.05;
  int evals = 0;
  while (step > 1e-4 && evals < 400) {
    bool improved = false;
    for (Eigen::Index d = 0; d < u.size() && !improved; ++d) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = u;
        trial(d) += sign * step;
        trial = to_interior(trial);
        ++evals;
        if (near_any(trial, existing, tol)) continue;
        const double v = ei_at_unit(model, bounds, trial, f_best);
        if (v > value) {
          value = v;
          u = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return u;
}

ParamVector to_param_vector(const std::vector<double>& v) {
  if (v.size() != kNumParams) throw InvalidArgument("expected nine calibrated parameters");
  ParamVector out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

struct ParamInfo {
  std::string_view description;
  std::string_view unit;
};

constexpr std::array<ParamInfo, kNumParams> kParamInfo = {{
    {"Strain rate sensitivity", "-"},
    {"Initial CRSS", "MPa"},
    {"Geometric factor", "-"},
    {"SSD density", "1/um^2"},
    {"Hardening rate", "MPa"},
    {"Saturation slip strength", "MPa"},
    {"Hardening exponent", "-"},
    {"Kinematic hardening modulus", "MPa"},
    {"Recovery modulus", "-"},
}};

}  // namespace

Eigen::MatrixXd lhs_sample(const Bounds& bounds, int n, std::uint64_t seed) {
  bounds.validate();
  if (n < 1) throw InvalidArgument("lhs_sample: n must be at least 1");
  Rng rng(seed);
  const std::size_t dim = bounds.dim();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(dim));
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (std::size_t d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    // Fisher-Yates with our own uniform draw so designs do not depend on the library's shuffle.
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    for (int i = 0; i < n; ++i) {
      const double u = (perm[static_cast<std::size_t>(i)] + uniform01(rng)) / n;
      out(i, static_cast<Eigen::Index>(d)) = bounds.lower[d] + u * (bounds.upper[d] - bounds.lower[d]);
    }
  }
  return out;
}

double expected_improvement(double mean, double sd, double f_best) {
  const double gain = f_best - mean;
  if (!(sd > 0.0)) return std::max(gain, 0.0);
  const double z = gain / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return std::max(gain * cdf + sd * pdf, 0.0);
}

double expected_improvement(const GpModel& model, const Eigen::VectorXd& x, double f_best) {
  const GpPrediction p = model.predict(x);
  return expected_improvement(p.mean, std::sqrt(p.variance), f_best);
}

std::vector<double> propose_next(const GpModel& model, const Bounds& bounds, double f_best,
                                 std::uint64_t seed, const ProposalOptions& options) {
  if (options.candidates < 1 || options.polish_starts < 0) throw InvalidArgument("propose_next: bad options");
  if (model.dim() != bounds.dim()) throw InvalidArgument("propose_next: model and bounds differ in dimension");
  const Eigen::MatrixXd& existing = model.x_unit();
  const Eigen::MatrixXd cand = shifted_halton(options.candidates, bounds.dim(), seed);
  const auto n = static_cast<std::size_t>(cand.rows());
  std::vector<double> ei(n, -1.0);
  std::vector<double> var(n, -1.0);
  parallel_for(n, [&](std::size_t i) {
    const Eigen::VectorXd u = to_interior(cand.row(static_cast<Eigen::Index>(i)).transpose());
    if (near_any(u, existing, options.duplicate_tolerance)) return;
    const GpPrediction p = model.predict(std::span<const double>(bounds.from_unit(u)));
    ei[i] = expected_improvement(p.mean, std::sqrt(p.variance), f_best);
    var[i] = p.variance;
  });

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ei[a] > ei[b]; });
  if (ei[order[0]] < 0.0) throw Error("propose_next: every candidate duplicates a previous evaluation");

  if (!(ei[order[0]] > 0.0)) {
    const auto it = std::max_element(var.begin(), var.end());
    return bounds.from_unit(to_interior(cand.row(static_cast<Eigen::Index>(it - var.begin())).transpose()));
  }

  const std::size_t starts = std::min<std::size_t>(static_cast<std::size_t>(options.polish_starts), n);
  std::vector<Eigen::VectorXd> polished(starts);
  std::vector<double> values(starts);
  parallel_for(starts, [&](std::size_t k) {
    values[k] = ei[order[k]];
    polished[k] = polish(model, bounds, to_interior(cand.row(static_cast<Eigen::Index>(order[k])).transpose()),
                         values[k], f_best, existing, options.duplicate_tolerance);
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < starts; ++k) {
    if (values[k] > values[best]) best = k;
  }
  if (starts == 0) return bounds.from_unit(to_interior(cand.row(static_cast<Eigen::Index>(order[0])).transpose()));
  return bounds.from_unit(polished[best]);
}

std::string_view to_string(Phase phase) { return phase == Phase::kInitial ? "initial" : "bo"; }

std::vector<double> BOHistory::best_so_far() const {
  std::vector<double> out;
  out.reserve(rows.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    best = std::min(best, r.objective);
    out.push_back(best);
  }
  return out;
}

std::size_t BOHistory::best_index() const {
  if (rows.empty()) throw InvalidArgument("history is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].objective < rows[best].objective) best = i;
  }
  return best;
}

void BOConfig::validate() const {
  if (n_initial < 0) throw InvalidArgument("bo: n_initial must be nonnegative");
  if (budget < 0) throw InvalidArgument("bo: budget must be nonnegative");
  if (n_initial + budget < 1) throw InvalidArgument("bo: nothing to evaluate");
  if (drop_best_initial < 0 || drop_best_initial > n_initial) {
    throw InvalidArgument("bo: drop_best_initial must lie in [0, n_initial]");
  }
  if (gp_restarts < 1) throw InvalidArgument("bo: gp_restarts must be at least 1");
  objective.validate();
}

std::vector<HistoryRow> evaluate_design(const CalibrationCase& calib, const Eigen::MatrixXd& design,
                                        const Simulator& simulator, const ObjectiveConfig& cfg,
                                        Phase phase, int first_iter) {
  if (static_cast<std::size_t>(design.cols()) != kNumParams) {
    throw InvalidArgument("evaluate_design: design must have nine columns");
  }
  std::vector<HistoryRow> rows(static_cast<std::size_t>(design.rows()));
  parallel_for(rows.size(), [&](std::size_t i) {
    HistoryRow& row = rows[i];
    row.iter = first_iter + static_cast<int>(i);
    row.phase = phase;
    for (std::size_t p = 0; p < kNumParams; ++p) {
      row.params[p] = design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
    }
    std::vector<ObjectiveBreakdown> parts;
    row.objective = multi_case_objective(calib, MaterialParams::from_calibrated(row.params), simulator, cfg, &parts);
    row.failed = std::any_of(parts.begin(), parts.end(), [](const auto& b) { return b.failed; });
  });
  return rows;
}

std::vector<HistoryRow> drop_best(const std::vector<HistoryRow>& rows, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > rows.size()) throw InvalidArgument("drop_best: k out of range");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].objective < rows[b].objective; });
  std::vector<bool> dropped(rows.size(), false);
  for (int i = 0; i < k; ++i) dropped[order[static_cast<std::size_t>(i)]] = true;
  std::vector<HistoryRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!dropped[i]) out.push_back(rows[i]);
  }
  return out;
}

GpModel fit_history(const std::vector<HistoryRow>& rows, const Bounds& bounds, const GpFitOptions& options) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumParams));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t p = 0; p < kNumParams; ++p) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = rows[i].params[p];
    }
    y(static_cast<Eigen::Index>(i)) = rows[i].objective;
  }
  return fit_gp(x, y, bounds, options);
}

CalibrationResult calibrate_from(const CalibrationCase& calib, const BOConfig& cfg,
                                 const Simulator& simulator, std::vector<HistoryRow> initial) {
  cfg.validate();
  calib.bounds.validate();
  if (calib.bounds.dim() != kNumParams) throw InvalidArgument("calibrate: bounds must have nine dimensions");
  CalibrationResult result;
  result.history.rows = std::move(initial);
  for (std::size_t i = 0; i < result.history.rows.size(); ++i) {
    result.history.rows[i].iter = static_cast<int>(i);
  }

  for (int b = 0; b < cfg.budget; ++b) {
    const int iter = static_cast<int>(result.history.rows.size());
    const std::uint64_t iter_seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter));
    std::vector<double> next;
    if (result.history.rows.size() < 2) {
      // Too little data for a surrogate: start from a seeded random point.
      Rng rng(iter_seed);
      Eigen::VectorXd u(static_cast<Eigen::Index>(kNumParams));
      for (auto& v : u) v = uniform01(rng);
      next = calib.bounds.from_unit(to_interior(u));
    } else {
      GpFitOptions gp;
      gp.restarts = cfg.gp_restarts;
      gp.seed = iter_seed;
      const GpModel model = fit_history(result.history.rows, calib.bounds, gp);
      const double f_best = result.history.rows[result.history.best_index()].objective;
      next = propose_next(model, calib.bounds, f_best, iter_seed, cfg.proposal);
    }
    Eigen::MatrixXd design(1, static_cast<Eigen::Index>(kNumParams));
    for (std::size_t p = 0; p < kNumParams; ++p) design(0, static_cast<Eigen::Index>(p)) = next[p];
    auto rows = evaluate_design(calib, design, simulator, cfg.objective, Phase::kBo, iter);
    result.history.rows.push_back(rows.front());
  }

  if (result.history.rows.empty()) throw InvalidArgument("calibrate: no evaluations were made");
  const HistoryRow& best = result.history.rows[result.history.best_index()];
  result.best = MaterialParams::from_calibrated(best.params);
  result.best_objective = best.objective;
  return result;
}

CalibrationResult calibrate(const CalibrationCase& calib, const BOConfig& cfg, const Simulator& simulator) {
  cfg.validate();
  std::vector<HistoryRow> initial;
  if (cfg.n_initial > 0) {
    const Eigen::MatrixXd design = lhs_sample(calib.bounds, cfg.n_initial, derive_seed(cfg.seed, 0));
    initial = evaluate_design(calib, design, simulator, cfg.objective, Phase::kInitial, 0);
  }
  return calibrate_from(calib, cfg, simulator, drop_best(initial, cfg.drop_best_initial));
}

void write_history_csv(std::ostream& os, const BOHistory& history, const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "iter,phase";
  for (auto name : kParamNames) os << ',' << name;
  os << ",objective_mpa,failed\n";
  for (const auto& r : history.rows) {
    os << r.iter << ',' << to_string(r.phase);
    for (double v : r.params) os << ',' << format_double(v);
    os << ',' << format_double(r.objective) << ',' << (r.failed ? 1 : 0) << '\n';
  }
}

BOHistory read_history_csv(std::istream& is) {
  const CsvTable table = read_csv(is);
  std::vector<std::string> header = {"iter", "phase"};
  for (auto name : kParamNames) header.emplace_back(name);
  header.emplace_back("objective_mpa");
  header.emplace_back("failed");
  require_header(table, header, "history CSV");
  BOHistory history;
  for (const auto& row : table.rows) {
    if (row.fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(row.line) + ": expected " + std::to_string(header.size()) + " fields");
    }
    HistoryRow r;
    r.iter = static_cast<int>(parse_int(row.fields[0], row.line));
    if (row.fields[1] == "initial") {
      r.phase = Phase::kInitial;
    } else if (row.fields[1] == "bo") {
      r.phase = Phase::kBo;
    } else {
      throw ParseError("line " + std::to_string(row.line) + ": unknown phase '" + row.fields[1] + "'");
    }
    std::vector<double> params;
    for (std::size_t p = 0; p < kNumParams; ++p) params.push_back(parse_double(row.fields[2 + p], row.line));
    r.params = to_param_vector(params);
    r.objective = parse_double(row.fields[2 + kNumParams], row.line);
    r.failed = parse_int(row.fields[3 + kNumParams], row.line) != 0;
    history.rows.push_back(r);
  }
  return history;
}

void write_best_params(std::ostream& os, const MaterialParams& params, double objective,
                       const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "# objective_mpa=" << format_double(objective) << '\n';
  os << "parameter,description,unit,value\n";
  const ParamVector v = params.calibrated();
  for (std::size_t p = 0; p < kNumParams; ++p) {
    os << kParamNames[p] << ',' << kParamInfo[p].description << ',' << kParamInfo[p].unit << ','
       << format_double(v[p]) << '\n';
  }
}

MaterialParams read_best_params(std::istream& is, MaterialParams base) {
  const CsvTable t = read_csv(is);
  require_header(t, {"parameter", "description", "unit", "value"}, "best parameter table");
  ParamVector v = base.calibrated();
  std::array<bool, kNumParams> seen{};
  for (const auto& row : t.rows) {
    if (row.fields.size() != 4) throw ParseError("line " + std::to_string(row.line) + ": expected 4 fields");
    const auto it = std::find(kParamNames.begin(), kParamNames.end(), row.fields[0]);
    if (it == kParamNames.end()) throw ParseError("line " + std::to_string(row.line) + ": unknown parameter '" + row.fields[0] + "'");
    const auto p = static_cast<std::size_t>(it - kParamNames.begin());
    v[p] = parse_double(row.fields[3], row.line);
    seen[p] = true;
  }
  for (std::size_t p = 0; p < kNumParams; ++p) {
    if (!seen[p]) throw ParseError("best parameter table is missing " + std::string(kParamNames[p]));
  }
  base.set_calibrated(v);
  return base;
}

void write_trajectory_csv(std::ostream& os, const BOHistory& history, const std::optional<Provenance>& prov) {
  write_provenance(os, prov);
  os << "iter,phase";
  for (auto name : kParamNames) os << ',' << name;
  os << ",c_sqrt_rho,objective_mpa,best_so_far_mpa\n";
  const std::vector<double> best = history.best_so_far();
  for (std::size_t i = 0; i < history.rows.size(); ++i) {
    const auto& r = history.rows[i];
    os << r.iter << ',' << to_string(r.phase);
    for (double v : r.params) os << ',' << format_double(v);
    os << ',' << format_double(r.params[2] * std::sqrt(r.params[3])) << ',' << format_double(r.objective) << ','
       << format_double(best[i]) << '\n';
  }
}

}  // namespace cpbo
