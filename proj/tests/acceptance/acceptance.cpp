// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to
// run a subset, e.g. `cpbo_acceptance 1 2 5`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/fixtures.hpp"
#include "cpbo/bayes_opt.hpp"
#include "cpbo/fip_report.hpp"
#include "cpbo/gnd_field.hpp"
#include "cpbo/parallel.hpp"
#include "cpbo/sensitivity.hpp"

namespace {

using namespace cpbo;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

class Criterion {
 public:
  explicit Criterion(std::string title) : title_(std::move(title)) {}

  void check(bool ok, const std::string& what) {
    if (!ok) pass_ = false;
    notes_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { notes_.push_back("info " + what); }

  bool pass() const { return pass_; }
  const std::string& title() const { return title_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::string title_;
  bool pass_ = true;
  std::vector<std::string> notes_;
};

const SlipSystemSet& sys() { return fcc_slip_systems(); }

// Simple shear on system 0 in the crystal frame with the other systems frozen.
struct SingleSlip {
  MaterialParams params;
  MaterialPointState state;
  StepOptions options;

  SingleSlip() {
    options.active.reset();
    options.active.set(0);
  }
  Mat3 shear(double g) const { return Mat3::Identity() + g * sys().schmid(0); }
  double advance(double g0, double g1, double rate, int n, bool& ok) {
    double tau = 0.0;
    const double dg = (g1 - g0) / n;
    for (int i = 1; i <= n; ++i) {
      const StepResult r = step(state, shear(g0 + i * dg), std::abs(dg) / rate, params, sys(), Mat3::Identity(), options);
      ok = ok && r.converged;
      state = r.new_state;
      tau = resolved_shear(r.cauchy_stress, sys()[0]);
    }
    return tau;
  }
};

double e100_oracle(double c11, double c12) { return (c11 - c12) * (c11 + 2.0 * c12) / (c11 + c12); }

// ---------------------------------------------------------------------------

Criterion constitutive() {
  Criterion c("constitutive oracles");
  const auto t0 = Clock::now();
  bool converged = true;

  {
    SingleSlip s;
    s.advance(0.0, 0.012, 1e-3, 120, converged);
    const MaterialParams& p = s.params;
    const double g = s.state.gamma_acc[0];
    const double oracle = p.h_kin / p.h_dyn * (1.0 - std::exp(-p.h_dyn * g));
    const double rel = std::abs(s.state.chi[0] - oracle) / oracle;
    c.check(rel < 0.005, "single-slip backstress vs (h/h_d)(1-exp(-h_d gamma)) at gamma=" + fmt(g) +
                             ": rel err " + fmt(rel, 3) + " < 0.5%");
  }
  {
    const MaterialParams p;
    const double sat = p.h_kin / p.h_dyn;
    c.check(std::abs(sat - 45.98) < 0.005 * 45.98, "saturation h_kin/h_dyn = " + fmt(sat) + " vs 45.98 MPa");
    SingleSlip s;
    double g = 0.0;
    while (s.state.gamma_acc[0] < 10.0 / s.params.h_dyn) {
      s.advance(g, g + 0.002, 1e-3, 20, converged);
      g += 0.002;
    }
    const double rel = std::abs(s.state.chi[0] - 45.98) / 45.98;
    c.check(rel < 0.005, "integrated backstress saturates at " + fmt(s.state.chi[0]) + " MPa (rel " + fmt(rel, 3) + ")");
  }
  {
    double tau[2];
    const double rates[2] = {1e-3, 1e-2};
    for (int k = 0; k < 2; ++k) {
      SingleSlip s;
      s.params.h0 = 1e-9;
      s.params.h_kin = 1e-9;
      s.params.h_dyn = 0.0;
      s.params.tau_s = 1e6;
      tau[k] = s.advance(0.0, 0.02, rates[k], 400, converged);
    }
    const double oracle = std::pow(rates[0] / rates[1], 1.0 / MaterialParams{}.n_rate);
    const double rel = std::abs(tau[0] / tau[1] - oracle) / oracle;
    c.check(rel < 0.01, "flow-stress ratio " + fmt(tau[0] / tau[1], 6) + " vs (r1/r2)^(1/n) " + fmt(oracle, 6));
  }
  {
    // Cyclic material-point run and a cyclic polycrystal run.
    MaterialParams p;
    MaterialPointState st;
    const Mat3 rot = Eigen::AngleAxisd(0.9, Vec3(3, -1, 2).normalized()).toRotationMatrix();
    double worst = 0.0;
    for (int i = 1; i <= 1600; ++i) {
      const double phase = std::fmod(i / 400.0, 1.0);
      const double e = 0.0075 * (phase < 0.25 ? 4 * phase : phase < 0.75 ? 2 - 4 * phase : 4 * phase - 4);
      Mat3 f = Mat3::Identity();
      f(2, 2) += e;
      f(0, 0) -= 0.5 * e;
      f(1, 1) -= 0.5 * e;
      const StepResult r = step(st, f, 0.01, p, sys(), rot);
      converged = converged && r.converged;
      st = r.new_state;
      worst = std::max(worst, std::abs(st.fp.determinant() - 1.0));
    }
    const Ensemble e = sample_ensemble(SizeStats{}, 40, 0.0, 3);
    const PolycrystalRun run = run_uniaxial(e, p, LoadingProgram{});
    for (const auto& g : run.per_grain_final) worst = std::max(worst, std::abs(g.fp.determinant() - 1.0));
    c.check(!run.failed && worst < 1e-6, "max |det Fp - 1| over cyclic runs = " + fmt(worst, 3));
  }
  c.check(converged, "every material-point step converged");
  const double dt = seconds_since(t0);
  c.check(dt < 10.0, "runtime " + fmt(dt, 3) + " s < 10 s");
  return c;
}

Criterion elasticity() {
  Criterion c("elasticity oracle");
  MaterialParams params;
  LoadingProgram p;
  p.amplitude = 1e-4;
  p.cycles = 1;
  const PolycrystalRun run = run_uniaxial(testing::single_grain(), params, p);
  const auto peak = std::max_element(run.curve.strain.begin(), run.curve.strain.end()) - run.curve.strain.begin();
  const double modulus = run.curve.stress[static_cast<std::size_t>(peak)] / run.curve.strain[static_cast<std::size_t>(peak)];
  const double oracle = e100_oracle(250e3, 139e3);
  const double rel = std::abs(modulus - oracle) / oracle;
  c.check(!run.failed && rel < 0.005,
          "[001] secant modulus " + fmt(modulus / 1e3, 6) + " GPa vs closed form " + fmt(oracle / 1e3, 6) + " GPa");
  return c;
}

// ---------------------------------------------------------------------------

struct CalibrationSetup {
  std::shared_ptr<const Ensemble> ensemble;
  Simulator simulator;
  CalibrationCase calib;
};

CalibrationSetup calibration_setup(std::uint64_t seed, int steps_per_quarter = 50) {
  CalibrationSetup s;
  s.ensemble = std::make_shared<const Ensemble>(sample_ensemble(SizeStats{}, 300, 0.0, seed));
  LoadingProgram program;
  program.cycles = 3;
  program.steps_per_quarter = steps_per_quarter;
  s.simulator = taylor_simulator(s.ensemble, program);
  s.calib.cases = {pseudo_experiment(s.simulator, MaterialParams{}, 0.005)};
  return s;
}

double best_initial(const BOHistory& h) {
  double best = 1e300;
  for (const auto& r : h.rows) {
    if (r.phase == Phase::kInitial) best = std::min(best, r.objective);
  }
  return best;
}

Criterion self_calibration() {
  Criterion c("self-calibration");
  std::vector<double> finals;
  bool all_below_initial = true;
  double worst_time = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto t0 = Clock::now();
    const CalibrationSetup s = calibration_setup(seed);
    BOConfig cfg;
    cfg.seed = seed;
    const CalibrationResult r = calibrate(s.calib, cfg, s.simulator);
    const double dt = seconds_since(t0);
    worst_time = std::max(worst_time, dt);
    const double init = best_initial(r.history);
    finals.push_back(r.best_objective);
    all_below_initial = all_below_initial && r.best_objective < init;
    c.note("seed " + std::to_string(seed) + ": final " + fmt(r.best_objective) + " MPa, best LHS " + fmt(init) +
           " MPa, " + std::to_string(r.history.rows.size()) + " evaluations, " + fmt(dt, 3) + " s");
  }
  std::vector<double> sorted = finals;
  std::sort(sorted.begin(), sorted.end());
  c.check(sorted[1] <= 25.0, "median final objective " + fmt(sorted[1]) + " MPa <= 25 MPa");
  c.check(all_below_initial, "final objective strictly below best initial LHS value for every seed");
  c.check(worst_time < 1800.0, "slowest calibration " + fmt(worst_time, 3) + " s < 30 min");

  // Time discretization: halving the step count barely moves the objective.
  const CalibrationSetup fine = calibration_setup(1, 50);
  const CalibrationSetup coarse = calibration_setup(1, 25);
  MaterialParams off;
  off.tau_s *= 1.15;
  off.h0 *= 0.8;
  off.h_kin *= 1.2;
  const ObjectiveConfig ocfg;
  const double f50 = multi_case_objective(fine.calib, off, fine.simulator, ocfg);
  const double f25 = multi_case_objective(fine.calib, off, coarse.simulator, ocfg);
  const double rel = std::abs(f25 - f50) / f50;
  c.check(rel < 0.01, "objective at 25 vs 50 steps per quarter: " + fmt(f25) + " vs " + fmt(f50) + " MPa (rel " +
                          fmt(rel, 3) + " < 1%)");
  return c;
}

// ---------------------------------------------------------------------------

// One LHS sweep of CP runs shared by the surrogate and SHAP criteria.
struct Sweep {
  Eigen::MatrixXd design;
  std::vector<ObjectiveBreakdown> breakdown;
  std::vector<SensitivitySample> samples;  // successful runs only
  double seconds = 0.0;
};

const Sweep& lhs_sweep() {
  static const Sweep sweep = [] {
    Sweep s;
    const auto t0 = Clock::now();
    const CalibrationSetup setup = calibration_setup(1);
    const Bounds bounds = Bounds::calibration_default();
    s.design = lhs_sample(bounds, 100, derive_seed(1, 0));
    const auto n = static_cast<std::size_t>(s.design.rows());
    s.breakdown.resize(n);
    std::vector<std::optional<SensitivitySample>> probe(n);
    ObjectiveConfig ocfg;
    ocfg.lambda = 0.0;
    parallel_for(n, [&](std::size_t i) {
      ParamVector pv{};
      for (std::size_t p = 0; p < kNumParams; ++p) pv[p] = s.design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
      PolycrystalRun run;
      try {
        run = setup.simulator(MaterialParams::from_calibrated(pv), 0.005);
      } catch (const Error& e) {
        run.failed = true;
        run.failure_reason = e.what();
      }
      s.breakdown[i] = objective_breakdown(setup.calib.cases[0], run, ocfg);
      if (!run.failed) {
        SensitivitySample smp;
        smp.params = pv;
        try {
          for (std::size_t t = 0; t < kAllProbeTargets.size(); ++t) smp.probes[t] = extract_probe(run, kAllProbeTargets[t]);
          probe[i] = smp;
        } catch (const Error&) {
        }
      }
    });
    for (const auto& p : probe) {
      if (p) s.samples.push_back(*p);
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return sweep;
}

double holdout_r2(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  const std::size_t n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n)));
  Eigen::MatrixXd xtr(static_cast<Eigen::Index>(n_train), x.cols());
  Eigen::VectorXd ytr(static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    xtr.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(perm[i]));
    ytr(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(perm[i]));
  }
  GpFitOptions opt;
  opt.seed = seed;
  const GpModel m = fit_gp(xtr, ytr, Bounds::calibration_default(), opt);
  std::vector<double> truth, pred;
  for (std::size_t i = n_train; i < n; ++i) {
    truth.push_back(y(static_cast<Eigen::Index>(perm[i])));
    pred.push_back(m.mean(x.row(static_cast<Eigen::Index>(perm[i])).transpose()));
  }
  return r2_score(truth, pred);
}

Criterion surrogate_quality() {
  Criterion c("surrogate quality");
  const auto t0 = Clock::now();
  const Sweep& s = lhs_sweep();
  int failures = 0;
  for (const auto& b : s.breakdown) failures += b.failed ? 1 : 0;
  c.note("100 LHS runs, " + std::to_string(failures) + " failed (500 MPa penalty), sweep " + fmt(s.seconds, 3) + " s");
  const std::uint64_t split_seed = derive_seed(1, 7);
  for (double lambda : {0.0, 0.5, 1.0}) {
    Eigen::VectorXd y(s.design.rows());
    std::vector<Eigen::Index> ok_rows;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const auto& b = s.breakdown[static_cast<std::size_t>(i)];
      y(i) = b.failed ? 500.0 : b.rmse + lambda * (std::abs(b.dmax32) + b.dmin32) / 2.0;
      if (!b.failed) ok_rows.push_back(i);
    }
    const double r2 = holdout_r2(s.design, y, split_seed);
    c.check(r2 >= 0.85, "lambda " + fmt(lambda, 2) + ": held-out R2 " + fmt(r2) + " >= 0.85");
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(ok_rows.size()), s.design.cols());
    Eigen::VectorXd ys(static_cast<Eigen::Index>(ok_rows.size()));
    for (std::size_t k = 0; k < ok_rows.size(); ++k) {
      xs.row(static_cast<Eigen::Index>(k)) = s.design.row(ok_rows[k]);
      ys(static_cast<Eigen::Index>(k)) = y(ok_rows[k]);
    }
    c.note("lambda " + fmt(lambda, 2) + ": held-out R2 without failed runs " + fmt(holdout_r2(xs, ys, split_seed)));
  }
  const double dt = seconds_since(t0);
  c.check(dt < 300.0, "runtime including the 100 simulations " + fmt(dt, 3) + " s < 5 min");
  return c;
}

// ---------------------------------------------------------------------------

Criterion objective_algebra() {
  Criterion c("objective algebra");
  LoadingProgram p;
  p.steps_per_quarter = 20;
  auto run_with = [&](double amplitude, double offset, double peak_spike, double valley_spike) {
    LoadingProgram q = p;
    q.amplitude = amplitude;
    PolycrystalRun r;
    r.curve = testing::synthetic_curve(q, [&](int cycle, int quarter, double u, double e) {
      double s = 200000.0 * e + offset;
      if (cycle == q.cycles && u == 1.0 && quarter == 0) s += peak_spike;
      if (cycle == q.cycles && u == 1.0 && quarter == 2) s += valley_spike;
      return s;
    });
    return r;
  };
  const ExperimentalCycles exp = experiment_from_curve(run_with(0.005, 0.0, 0.0, 0.0).curve);
  const PolycrystalRun sim = run_with(0.005, 10.0, 4.0, -4.0);

  ObjectiveConfig cfg;
  cfg.lambda = 0.0;
  const ObjectiveBreakdown b0 = objective_breakdown(exp, sim, cfg);
  c.check(b0.objective == b0.rmse && std::abs(b0.rmse - 10.0) < 1e-9,
          "lambda = 0 gives the RMSE exactly (" + fmt(b0.objective, 10) + ")");
  cfg.lambda = 0.5;
  const double f = objective_value(exp, sim, cfg);
  c.check(std::abs(f - 12.0) < 1e-9, "RMSE 10 + 0.5 * gap 4 = " + fmt(f, 10));

  PolycrystalRun failed = sim;
  failed.failed = true;
  c.check(objective_value(exp, failed, cfg) == 500.0, "failed run returns 500 MPa");

  bool monotone = true;
  double prev = -1.0;
  for (double lam = 0.0; lam <= 3.0; lam += 0.25) {
    cfg.lambda = lam;
    const double v = objective_value(exp, sim, cfg);
    monotone = monotone && v >= prev;
    prev = v;
  }
  c.check(monotone, "objective nondecreasing in lambda for positive gaps");

  cfg.lambda = 0.5;
  CalibrationCase calib;
  calib.cases = {exp, experiment_from_curve(run_with(0.004, 0.0, 0.0, 0.0).curve)};
  const Simulator two = [&](const MaterialParams&, double a) { return run_with(a, a > 0.0045 ? 10.0 : 20.0, 0, 0); };
  const double mean2 = multi_case_objective(calib, MaterialParams{}, two, cfg);
  c.check(std::abs(mean2 - 15.0) < 1e-9, "two-case mean (10 + 20) / 2 = " + fmt(mean2, 10));
  const Simulator half_fail = [&](const MaterialParams&, double a) -> PolycrystalRun {
    if (a < 0.0045) throw Error("diverged");
    return run_with(a, 10.0, 0, 0);
  };
  const double mean_fail = multi_case_objective(calib, MaterialParams{}, half_fail, cfg);
  c.check(std::abs(mean_fail - 255.0) < 1e-9, "one failing case gives (10 + 500) / 2 = " + fmt(mean_fail, 10));
  return c;
}

// ---------------------------------------------------------------------------

PolycrystalRun bowl_run(const MaterialParams& params, double amplitude) {
  const Eigen::VectorXd u = Bounds::calibration_default().to_unit(params.calibrated());
  PolycrystalRun run;
  if (params.tau_s <= params.tau_c0) {
    run.failed = true;
    return run;
  }
  double off = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) off += 40.0 * (u(i) - 0.3) * (u(i) - 0.3);
  LoadingProgram p;
  p.amplitude = amplitude;
  p.steps_per_quarter = 8;
  run.curve = testing::synthetic_curve(p, [off](int, int, double, double e) { return 200000.0 * e + off; });
  return run;
}

Criterion bo_mechanics() {
  Criterion c("BO mechanics");
  const Bounds b = Bounds::calibration_default();
  bool stratified = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::MatrixXd x = lhs_sample(b, 50, seed);
    for (std::size_t d = 0; d < b.dim(); ++d) {
      std::set<int> strata;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double u = (x(i, static_cast<Eigen::Index>(d)) - b.lower[d]) / (b.upper[d] - b.lower[d]);
        strata.insert(static_cast<int>(std::floor(u * 50)));
      }
      stratified = stratified && strata.size() == 50;
    }
  }
  c.check(stratified, "LHS has one point per stratum in all 9 dimensions (n = 50, 3 seeds)");

  CalibrationCase calib;
  LoadingProgram p;
  p.steps_per_quarter = 8;
  calib.cases = {experiment_from_curve(testing::elastic_curve(p, 200000.0))};
  BOConfig cfg;
  cfg.n_initial = 12;
  cfg.budget = 10;
  cfg.seed = 4;
  cfg.gp_restarts = 2;
  cfg.proposal.candidates = 512;
  const CalibrationResult a = calibrate(calib, cfg, bowl_run);
  const CalibrationResult r = calibrate(calib, cfg, bowl_run);
  bool same = a.history.rows.size() == r.history.rows.size();
  for (std::size_t i = 0; same && i < a.history.rows.size(); ++i) {
    same = a.history.rows[i].params == r.history.rows[i].params && a.history.rows[i].objective == r.history.rows[i].objective;
  }
  c.check(same, "repeated calibration with the same seed reproduces the full history");
  const auto best = a.history.best_so_far();
  c.check(std::is_sorted(best.rbegin(), best.rend()), "best-so-far is nonincreasing");
  const double phi0 = expected_improvement(0.0, 1.0, 0.0);
  c.check(std::abs(phi0 - 0.39894) < 5e-6, "EI(mean = f_best, sd = 1) = phi(0) = " + fmt(phi0, 6));
  c.check(expected_improvement(3.0, 0.0, 5.0) == 2.0 && expected_improvement(6.0, 0.0, 5.0) == 0.0,
          "EI with zero variance is max(f_best - mean, 0)");
  return c;
}

// ---------------------------------------------------------------------------

Criterion shap() {
  Criterion c("SHAP axioms and CP ranking");
  Rng rng(5);
  auto rnd = [&](Eigen::Index r, Eigen::Index k) {
    Eigen::MatrixXd m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1, 1);
    return m;
  };
  const Eigen::VectorXd w = rnd(9, 1).col(0);
  const ScalarModel linear = [&](const Eigen::VectorXd& v) { return 1.5 + w.dot(v); };
  const Eigen::MatrixXd bg = rnd(12, 9);
  const Eigen::VectorXd mean = bg.colwise().mean().transpose();
  double lin_err = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd x = rnd(9, 1).col(0);
    const auto phi = shapley_values(linear, x, bg);
    for (Eigen::Index i = 0; i < 9; ++i) lin_err = std::max(lin_err, std::abs(phi[static_cast<std::size_t>(i)] - w(i) * (x(i) - mean(i))));
  }
  c.check(lin_err < 1e-9, "linear model attributions w_i (x_i - mean_i), max error " + fmt(lin_err, 3));

  const ScalarModel f = [](const Eigen::VectorXd& v) { return std::sin(v(0) + v(1)) + v(0) * v(1) * v(2) + v(2) * v(2); };
  Eigen::MatrixXd bg4 = rnd(10, 4);
  bg4.col(1) = bg4.col(0);
  double dummy = 0.0, symm = 0.0, eff = 0.0;
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd x = rnd(4, 1).col(0);
    x(1) = x(0);
    const auto phi = shapley_values(f, x, bg4);
    dummy = std::max(dummy, std::abs(phi[3]));
    symm = std::max(symm, std::abs(phi[0] - phi[1]));
    eff = std::max(eff, std::abs(phi[0] + phi[1] + phi[2] + phi[3] - (f(x) - shap_baseline(f, bg4))));
  }
  c.check(dummy < 1e-9, "dummy feature gets " + fmt(dummy, 3));
  c.check(symm < 1e-9, "symmetric features differ by " + fmt(symm, 3));
  c.check(eff < 1e-6, "efficiency on constructed model, max error " + fmt(eff, 3));

  const Sweep& s = lhs_sweep();
  SensitivityOptions opt;
  opt.seed = 1;
  const std::array<ProbeTarget, 1> targets = {ProbeTarget::kGapMax32};
  const auto reports = sensitivity_study(s.samples, targets, opt);
  const ShapReport& r = reports[0];
  if (r.skipped) {
    c.check(false, "gap_max32 study skipped: " + r.diagnostic);
    return c;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < r.shap.size(); ++i) {
    double sum = 0.0;
    for (double v : r.shap[i]) sum += v;
    worst = std::max(worst, std::abs(sum - (r.predictions[i] - r.baseline)));
  }
  c.check(worst < 1e-6, "efficiency on all " + std::to_string(r.shap.size()) + " CP rows, max error " + fmt(worst, 3));
  std::string ranking;
  for (std::size_t k = 0; k < kNumParams; ++k) {
    ranking += (k ? " > " : "") + std::string(kParamNames[r.ranking[k]]);
  }
  c.note("gap_max32 ranking (" + std::to_string(r.shap.size()) + " runs, held-out R2 " + fmt(r.r2_holdout) + "): " + ranking);
  for (std::size_t p : {4u, 5u, 6u}) {
    c.check(r.rank_of(p) <= kNumParams / 2, std::string(kParamNames[p]) + " rank " + std::to_string(r.rank_of(p)) +
                                                " in top half (<= " + std::to_string(kNumParams / 2) + ")");
  }
  return c;
}

// ---------------------------------------------------------------------------

double brute_misorientation(const Orientation& a, const Orientation& b) {
  const Eigen::Quaterniond d = a.quaternion().conjugate() * b.quaternion();
  double best = 360.0;
  for (const auto& si : cubic_symmetry()) {
    for (const auto& sj : cubic_symmetry()) {
      best = std::min(best, 2.0 * std::acos(std::min(1.0, std::abs((si * d * sj).w()))) * 180.0 / std::numbers::pi);
    }
  }
  return best;
}

Criterion microstructure_gnd() {
  Criterion c("microstructure and GND");
  const Ensemble twinned = sample_ensemble(SizeStats{}, 300, 0.45, 6);
  double worst_twin = 0.0;
  for (const auto& g : twinned.grains) {
    if (g.is_twin()) {
      worst_twin = std::max(worst_twin, std::abs(misorientation(g.orientation, twinned.grain(*g.parent_id).orientation) - 60.0));
    }
  }
  c.check(worst_twin < 1e-9, "Sigma3 twin misorientation within " + fmt(worst_twin, 3) + " deg of 60");

  Rng rng(11);
  double max_mis = 0.0, max_diff = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Orientation a = Orientation::random(rng), b = Orientation::random(rng);
    const double m = misorientation(a, b);
    max_mis = std::max(max_mis, m);
    max_diff = std::max(max_diff, std::abs(m - brute_misorientation(a, b)));
  }
  c.check(max_mis <= 62.80 && max_diff < 1e-9,
          "max misorientation " + fmt(max_mis) + " <= 62.80 deg, brute force agrees within " + fmt(max_diff, 3));

  double max_schmid = 0.0;
  for (int i = 0; i < 10000; ++i) max_schmid = std::max(max_schmid, schmid_factor(Orientation::random(rng), Vec3::UnitZ()));
  const double cube = schmid_factor(Orientation::cube(), Vec3::UnitZ());
  c.check(max_schmid <= 0.5 && std::abs(cube - 0.4082) < 5e-5,
          "Schmid factor max " + fmt(max_schmid, 6) + " <= 0.5, cube [001] " + fmt(cube, 6));

  VoxelField uniform_field({4, 4, 4}, 1.0);
  for (Mat3& m : uniform_field.fp) m << 1.001, 0.002, 0, 0, 0.999, 0.001, 0, 0, 1.0;
  const GndResult g = analyze_gnd(uniform_field, sys(), 2.5e-4);
  double gnd_max = 0.0;
  for (const auto& p : g.projection) {
    for (std::size_t s = 0; s < kNumSlip; ++s) gnd_max = std::max({gnd_max, p.rho_edge[s], p.rho_screw[s]});
  }
  c.check(gnd_max == 0.0, "uniform Fp gives zero GND density");

  double rt = 0.0;
  for (int t = 0; t < 100; ++t) {
    SlipArray e{}, s{};
    for (std::size_t k = 0; k < kNumSlip; ++k) {
      e[k] = uniform(rng, -1, 1);
      s[k] = uniform(rng, -1, 1);
    }
    const Mat3 nye = synthesize_nye(e, s, sys(), 2.5e-4);
    const auto x = solve_gnd_signed(nye, sys(), 2.5e-4);
    SlipArray e2{}, s2{};
    for (std::size_t k = 0; k < kNumSlip; ++k) {
      e2[k] = x(static_cast<Eigen::Index>(k));
      s2[k] = x(static_cast<Eigen::Index>(k + kNumSlip));
    }
    rt = std::max(rt, (synthesize_nye(e2, s2, sys(), 2.5e-4) - nye).norm() / nye.norm());
  }
  c.check(rt < 1e-9, "synthesized Nye tensors recovered by SVD projection, max rel error " + fmt(rt, 3));

  std::vector<double> rel;
  double peak300 = 0.0, peak600 = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double peaks[2];
    int k = 0;
    for (int n : {300, 600}) {
      const PolycrystalRun run = run_uniaxial(sample_ensemble(SizeStats{}, n, 0.0, seed), MaterialParams{}, LoadingProgram{});
      peaks[k++] = extract_probe(run, ProbeTarget::kStressAtPeakTension);
    }
    peak300 += peaks[0] / 3.0;
    peak600 += peaks[1] / 3.0;
    c.note("seed " + std::to_string(seed) + ": cycle-3 peak " + fmt(peaks[0], 6) + " MPa (300) vs " + fmt(peaks[1], 6) +
           " MPa (600)");
  }
  const double change = std::abs(peak600 - peak300) / peak600;
  c.check(change < 0.02, "seed-averaged cycle-3 peak " + fmt(peak300, 6) + " -> " + fmt(peak600, 6) + " MPa, change " +
                             fmt(100 * change, 3) + "% < 2%");
  return c;
}

// ---------------------------------------------------------------------------

Criterion twin_comparison() {
  Criterion c("twin comparison harness");
  const Ensemble base = sample_ensemble(SizeStats{}, 300, 0.0, 11);
  LoadingProgram program;
  program.cycles = 5;
  TwinComparisonOptions opt;
  opt.seed = 11;
  opt.gnd_resolution = 24;
  const TwinComparison t = compare_twinned(base, MaterialParams{}, program, opt);
  const double rel = t.relative_curve_difference();
  c.check(rel < 0.05, "max curve difference " + fmt(t.max_curve_difference) + " MPa = " + fmt(100 * rel, 3) +
                          "% of peak " + fmt(t.peak_stress) + " MPa (< 5%)");
  c.note("twin volume fraction " + fmt(t.twinned.twin_volume_fraction) + ", " +
         std::to_string(t.twinned.grains.size() - base.grains.size()) + " lamellae");

  bool fits = true;
  for (const auto* recs : {&t.base_records, &t.twinned_records}) {
    const auto top = top_w(*recs, 150);
    const LognormalFit f = fit_lognormal(top);
    fits = fits && top.size() == 150 && std::is_sorted(top.rbegin(), top.rend()) && std::isfinite(f.mu_log) && f.sigma_log > 0.0;
  }
  fits = fits && fit_lognormal(top_w(t.base_records, 150)).mu_log == t.base_fit.mu_log;
  c.check(fits, "top-150 w_max lognormal fits: base (" + fmt(t.base_fit.mu_log) + ", " + fmt(t.base_fit.sigma_log) +
                    "), twinned (" + fmt(t.twinned_fit.mu_log) + ", " + fmt(t.twinned_fit.sigma_log) + ")");

  bool cdf_ok = true, flags_ok = true, critical_ok = true;
  const std::array<std::pair<const FailureReport*, const std::vector<GrainFipRecord>*>, 2> pairs = {
      std::pair{&t.base_report, &t.base_records}, std::pair{&t.twinned_report, &t.twinned_records}};
  const std::array<const Ensemble*, 2> ensembles = {&base, &t.twinned};
  for (std::size_t k = 0; k < 2; ++k) {
    const FailureReport& rep = *pairs[k].first;
    const auto& recs = *pairs[k].second;
    cdf_ok = cdf_ok && rep.cdf_diameter > 0.0 && rep.cdf_diameter <= 1.0 && rep.cdf_gnd && *rep.cdf_gnd >= 0.0 &&
             *rep.cdf_gnd <= 1.0;
    for (const auto& r : recs) critical_ok = critical_ok && r.w_max <= rep.critical.w_max;
    const Ensemble& e = *ensembles[k];
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const GrainRecord& g = e.grains[i];
      bool adj = g.is_twin();
      for (int nb : g.neighbors) adj = adj || e.grain(nb).is_twin();
      flags_ok = flags_ok && recs[i].is_twin_adjacent == adj;
    }
  }
  for (const auto& r : t.base_records) flags_ok = flags_ok && !r.is_twin_adjacent;
  c.check(cdf_ok, "failure-report CDF values in [0, 1]");
  c.check(flags_ok, "twin-boundary flags match the ensemble adjacency");
  c.check(critical_ok, "critical grain carries the largest w_max");

  std::ostringstream csv;
  write_failure_csv(csv, {t.base_report, t.twinned_report});
  const std::string text = csv.str();
  c.check(text.rfind("ensemble,twin_boundary,gnd_cdf,diameter_cdf,avg_misorientation_deg,schmid\n", 0) == 0 &&
              std::count(text.begin(), text.end(), '\n') == 3,
          "failure report follows the table schema");
  std::istringstream rows(text);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) c.note(line);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Criterion()>>> all = {
      {1, constitutive},       {2, elasticity},   {3, self_calibration},
      {4, surrogate_quality},  {5, objective_algebra}, {6, bo_mechanics},
      {7, shap},               {8, microstructure_gnd}, {9, twin_comparison}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = Clock::now();
    Criterion c("");
    try {
      c = fn();
    } catch (const std::exception& e) {
      c = Criterion("exception");
      c.check(false, e.what());
    }
    for (const auto& n : c.notes()) std::cout << "  [" << id << "] " << n << '\n';
    const std::string line = "criterion " + std::to_string(id) + ": " + (c.pass() ? "PASS" : "FAIL") + "  " + c.title() +
                             " (" + fmt(seconds_since(t0), 3) + " s)";
    std::cout << line << '\n' << std::flush;
    lines.push_back(line);
    failed += c.pass() ? 0 : 1;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
