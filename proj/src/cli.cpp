#include "cpbo/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpbo/bayes_opt.hpp"
#include "cpbo/fip_report.hpp"
#include "cpbo/parallel.hpp"

namespace cpbo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Typed access to one config object; every key read is remembered so the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument(name_ + ": expected an object");
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    known_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw InvalidArgument(where(key) + " must be a number");
    dst = v.get<double>();
  }

  void integer(const std::string& key, int& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw InvalidArgument(where(key) + " must be an integer");
    dst = v.get<int>();
  }

  void text(const std::string& key, std::string& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw InvalidArgument(where(key) + " must be a string");
    dst = v.get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) throw InvalidArgument(where(it.key()) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const { return name_ + "." + key; }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void parse_microstructure(Section s, RunConfig& cfg, const fs::path& base) {
  s.integer("n_grains", cfg.n_grains);
  s.number("twin_target", cfg.twin_target);
  s.number("mean_2d_um", cfg.size_stats.mean_2d);
  s.number("sd_2d_um", cfg.size_stats.sd_2d);
  std::string file;
  s.text("ensemble_file", file);
  if (!file.empty()) cfg.ensemble_file = resolve(base, file);
  s.finish();
  if (cfg.n_grains < 1) throw InvalidArgument("microstructure.n_grains must be positive");
  if (!(cfg.size_stats.mean_2d > 0.0 && cfg.size_stats.sd_2d > 0.0)) {
    throw InvalidArgument("microstructure: size statistics must be positive");
  }
  if (!(cfg.twin_target >= 0.0 && cfg.twin_target <= 0.6)) {
    throw InvalidArgument("microstructure.twin_target must lie in [0, 0.6]");
  }
}

void parse_loading(Section s, LoadingProgram& p) {
  s.number("amplitude", p.amplitude);
  s.number("r_ratio", p.r_ratio);
  s.number("rate", p.rate);
  s.integer("cycles", p.cycles);
  s.integer("steps_per_quarter", p.steps_per_quarter);
  s.finish();
  p.validate();
}

void parse_homogenization(Section s, HomogenizationOptions& h) {
  s.number("tol_lateral", h.tol_lateral);
  s.integer("max_lateral_iterations", h.max_lateral_iterations);
  s.number("failure_stress", h.failure_stress);
  s.number("max_dgamma", h.step.max_dgamma);
  s.finish();
  if (!(h.tol_lateral > 0.0) || h.max_lateral_iterations < 1 || !(h.failure_stress > 0.0) ||
      !(h.step.max_dgamma > 0.0)) {
    throw InvalidArgument("homogenization: tolerances and limits must be positive");
  }
}

void parse_material(Section s, MaterialParams& m, const fs::path& base) {
  std::string file;
  s.text("params_file", file);
  if (!file.empty()) {
    std::ifstream in(resolve(base, file));
    if (!in) throw InvalidArgument("material.params_file: cannot open '" + file + "'");
    m = read_best_params(in, m);
  }
  ParamVector v = m.calibrated();
  for (std::size_t p = 0; p < kNumParams; ++p) s.number(std::string(kParamNames[p]), v[p]);
  m.set_calibrated(v);
  s.number("gamma_dot0", m.gamma_dot0);
  s.number("q_coplanar", m.q_coplanar);
  s.number("q_noncoplanar", m.q_noncoplanar);
  s.number("c11", m.c11);
  s.number("c12", m.c12);
  s.number("c44", m.c44);
  s.number("g_shear", m.g_shear);
  s.number("burgers", m.burgers);
  std::string mode;
  s.text("forest_mode", mode);
  if (!mode.empty()) m.forest_mode = parse_forest_mode(mode);
  s.finish();
  m.validate();
}

void parse_objective(Section s, ObjectiveConfig& o) {
  s.number("lambda", o.lambda);
  s.integer("n_points", o.n_points);
  s.number("penalty", o.penalty);
  s.integer("sim_cycles", o.sim_cycles);
  s.finish();
  o.validate();
}

void parse_bounds(Section s, Bounds& b) {
  for (std::size_t p = 0; p < kNumParams; ++p) {
    const std::string key(kParamNames[p]);
    if (!s.has(key)) continue;
    const json& v = s.raw(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw InvalidArgument(s.where(key) + " must be [lower, upper]");
    }
    b.lower[p] = v[0].get<double>();
    b.upper[p] = v[1].get<double>();
  }
  s.finish();
  b.validate();
}

void parse_calibration(Section s, RunConfig& cfg, const fs::path& base) {
  s.integer("n_initial", cfg.n_initial);
  s.integer("budget", cfg.budget);
  s.integer("candidates", cfg.candidates);
  s.integer("gp_restarts", cfg.gp_restarts);
  s.integer("drop_best_initial", cfg.drop_best_initial);
  if (s.has("experiments")) {
    const json& list = s.raw("experiments");
    if (!list.is_array()) throw InvalidArgument("calibration.experiments must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section e(list[i], "calibration.experiments[" + std::to_string(i) + "]");
      ExperimentSpec spec;
      std::string file;
      e.text("file", file);
      if (e.has("first_cycle")) {
        int c = 0;
        e.integer("first_cycle", c);
        spec.first_cycle = c;
      }
      e.number("pseudo_amplitude", spec.pseudo_amplitude);
      e.finish();
      if (file.empty() == !(spec.pseudo_amplitude > 0.0)) {
        throw InvalidArgument(e.where("") + " needs exactly one of file or a positive pseudo_amplitude");
      }
      if (!file.empty()) spec.file = resolve(base, file);
      cfg.experiments.push_back(spec);
    }
  }
  s.finish();
  if (cfg.candidates < 1) throw InvalidArgument("calibration.candidates must be positive");
}

void parse_sensitivity(Section s, RunConfig& cfg) {
  s.integer("n_samples", cfg.sensitivity_samples);
  s.number("holdout_fraction", cfg.holdout_fraction);
  s.integer("max_background", cfg.max_background);
  if (s.has("targets")) {
    const json& list = s.raw("targets");
    if (!list.is_array() || list.empty()) throw InvalidArgument("sensitivity.targets must be a nonempty list");
    cfg.sensitivity_targets.clear();
    for (const auto& t : list) {
      if (!t.is_string()) throw InvalidArgument("sensitivity.targets entries must be strings");
      cfg.sensitivity_targets.push_back(parse_probe_target(t.get<std::string>()));
    }
  }
  s.finish();
  if (cfg.sensitivity_samples < 1) throw InvalidArgument("sensitivity.n_samples must be positive");
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
    throw InvalidArgument("sensitivity.holdout_fraction must lie in (0, 1)");
  }
  if (cfg.max_background < 1) throw InvalidArgument("sensitivity.max_background must be positive");
}

void parse_report(Section s, RunConfig& cfg) {
  s.number("twin_target", cfg.report_twin_target);
  s.integer("top_k", cfg.report_top_k);
  s.integer("gnd_resolution", cfg.gnd_resolution);
  s.finish();
  if (cfg.report_top_k < 2) throw InvalidArgument("report.top_k must be at least 2");
  if (cfg.gnd_resolution != 0 && cfg.gnd_resolution < 2) {
    throw InvalidArgument("report.gnd_resolution must be 0 or at least 2");
  }
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Ensemble> make_ensemble(const RunConfig& cfg) {
  if (cfg.ensemble_file) {
    std::ifstream in(*cfg.ensemble_file);
    if (!in) throw InvalidArgument("cannot open ensemble file '" + cfg.ensemble_file->string() + "'");
    return std::make_shared<const Ensemble>(read_ensemble_csv(in));
  }
  return std::make_shared<const Ensemble>(sample_ensemble(cfg.size_stats, cfg.n_grains, cfg.twin_target, cfg.seed));
}

class Workflow {
 public:
  Workflow(const RunConfig& cfg, std::string command, std::ostream& out)
      : cfg_(cfg), out_(out) {
    summary_["command"] = std::move(command);
    summary_["seed"] = cfg.seed;
    summary_["config_hash"] = cfg.config_hash;
    summary_["artifacts"] = json::array();
    fs::create_directories(cfg.output_dir);
  }

  template <class Fn>
  void artifact(const std::string& name, Fn&& write) {
    const fs::path path = cfg_.output_dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write '" + path.string() + "'");
    write(os);
    if (!os) throw Error("error while writing '" + path.string() + "'");
    summary_["artifacts"].push_back(name);
    out_ << "wrote " << path.string() << '\n';
  }

  json& summary() { return summary_; }

  void finish() {
    artifact("summary.json", [&](std::ostream& os) { os << summary_.dump(2) << '\n'; });
  }

 private:
  const RunConfig& cfg_;
  std::ostream& out_;
  json summary_;
};

json params_json(const MaterialParams& m) {
  json j = json::object();
  const ParamVector v = m.calibrated();
  for (std::size_t p = 0; p < kNumParams; ++p) j[std::string(kParamNames[p])] = v[p];
  return j;
}

json fit_json(const LognormalFit& f) { return {{"mu_log", f.mu_log}, {"sigma_log", f.sigma_log}}; }

json failure_json(const FailureReport& r) {
  json j = {{"grain_id", r.critical.grain_id},
            {"w_max_mpa", r.critical.w_max},
            {"twin_boundary", r.critical.is_twin_adjacent},
            {"diameter_cdf", r.cdf_diameter},
            {"avg_misorientation_deg", r.critical.avg_misorientation},
            {"schmid", r.critical.schmid}};
  j["gnd_cdf"] = r.cdf_gnd ? json(*r.cdf_gnd) : json(nullptr);
  return j;
}

int run_generate(const RunConfig& cfg, std::ostream& out) {
  Workflow wf(cfg, "generate", out);
  const auto ens = make_ensemble(cfg);
  const Provenance prov = cfg.provenance();
  wf.artifact("ensemble.csv", [&](std::ostream& os) { write_ensemble_csv(os, *ens, prov); });
  wf.summary()["n_grains"] = ens->grains.size();
  wf.summary()["twin_volume_fraction"] = ens->twin_volume_fraction;
  wf.finish();
  return kExitOk;
}

int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Workflow wf(cfg, "simulate", out);
  const auto ens = make_ensemble(cfg);
  const PolycrystalRun run = run_uniaxial(*ens, cfg.material, cfg.loading, cfg.homogenization);
  if (run.failed) {
    err << "simulation failed: " << run.failure_reason << '\n';
    return kExitSimulation;
  }
  const Provenance prov = cfg.provenance();
  wf.artifact("curve.csv", [&](std::ostream& os) { write_curve_csv(os, run.curve, prov); });
  const auto records = collect_fip(run, *ens);
  wf.artifact("grains.csv", [&](std::ostream& os) { write_fip_csv(os, records, prov); });

  json& s = wf.summary();
  s["n_grains"] = ens->grains.size();
  s["material"] = params_json(cfg.material);
  const auto seg = segment_cycles(run.curve);
  json cycles = json::array();
  for (const auto& c : seg.cycles) {
    cycles.push_back({{"peak_stress_mpa", stress_at_time(run.curve, c.t_peak)},
                      {"valley_stress_mpa", stress_at_time(run.curve, c.t_valley)}});
  }
  s["cycles"] = cycles;
  wf.finish();
  return kExitOk;
}

CalibrationCase build_case(const RunConfig& cfg, const Simulator& sim) {
  if (cfg.experiments.empty()) throw InvalidArgument("calibration.experiments is empty");
  CalibrationCase calib;
  calib.bounds = cfg.bounds;
  for (const auto& e : cfg.experiments) {
    if (e.file) {
      calib.cases.push_back(load_experiment(e.file->string(), e.first_cycle));
    } else {
      calib.cases.push_back(pseudo_experiment(sim, cfg.material, e.pseudo_amplitude));
    }
  }
  return calib;
}

BOConfig bo_config(const RunConfig& cfg) {
  BOConfig bo;
  bo.n_initial = cfg.n_initial;
  bo.budget = cfg.budget;
  bo.seed = cfg.seed;
  bo.objective = cfg.objective;
  bo.proposal.candidates = cfg.candidates;
  bo.gp_restarts = cfg.gp_restarts;
  bo.drop_best_initial = cfg.drop_best_initial;
  bo.validate();
  return bo;
}

Simulator calibration_simulator(const RunConfig& cfg, std::shared_ptr<const Ensemble> ens) {
  LoadingProgram program = cfg.loading;
  program.cycles = cfg.objective.sim_cycles;
  return taylor_simulator(std::move(ens), program, cfg.homogenization);
}

double best_initial(const BOHistory& h) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : h.rows) {
    if (r.phase == Phase::kInitial) best = std::min(best, r.objective);
  }
  return best;
}

int run_calibrate(const RunConfig& cfg, std::ostream& out) {
  const BOConfig bo = bo_config(cfg);
  Workflow wf(cfg, "calibrate", out);
  const Simulator sim = calibration_simulator(cfg, make_ensemble(cfg));
  const CalibrationCase calib = build_case(cfg, sim);
  const CalibrationResult res = calibrate(calib, bo, sim);

  std::vector<ObjectiveBreakdown> breakdown;
  multi_case_objective(calib, res.best, sim, cfg.objective, &breakdown);

  const Provenance prov = cfg.provenance();
  wf.artifact("history.csv", [&](std::ostream& os) { write_history_csv(os, res.history, prov); });
  wf.artifact("best_params.csv", [&](std::ostream& os) { write_best_params(os, res.best, res.best_objective, prov); });
  wf.artifact("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, res.history, prov); });
  wf.artifact("breakdown.csv", [&](std::ostream& os) { write_breakdown_csv(os, breakdown, prov); });

  json& s = wf.summary();
  s["evaluations"] = res.history.rows.size();
  s["best_objective_mpa"] = res.best_objective;
  s["best_iter"] = res.history.rows[res.history.best_index()].iter;
  s["best_params"] = params_json(res.best);
  const double bi = best_initial(res.history);
  s["best_initial_mpa"] = std::isfinite(bi) ? json(bi) : json(nullptr);
  wf.finish();
  out << "best objective " << format_double(res.best_objective) << " MPa\n";
  return kExitOk;
}

int run_sensitivity(const RunConfig& cfg, std::ostream& out) {
  Workflow wf(cfg, "sensitivity", out);
  const Simulator sim = taylor_simulator(make_ensemble(cfg), cfg.loading, cfg.homogenization);
  const Eigen::MatrixXd design = lhs_sample(cfg.bounds, cfg.sensitivity_samples, derive_seed(cfg.seed, 0));
  const auto dataset = build_sensitivity_dataset(design, sim, cfg.loading.amplitude);

  SensitivityOptions opts;
  opts.bounds = cfg.bounds;
  opts.holdout_fraction = cfg.holdout_fraction;
  opts.max_background = static_cast<std::size_t>(cfg.max_background);
  opts.seed = cfg.seed;
  opts.gp_restarts = cfg.gp_restarts;
  const auto reports = sensitivity_study(dataset, cfg.sensitivity_targets, opts);

  const Provenance prov = cfg.provenance();
  wf.artifact("shap.csv", [&](std::ostream& os) { write_shap_csv(os, reports, prov); });
  wf.artifact("shap_summary.csv", [&](std::ostream& os) { write_shap_summary_csv(os, reports, prov); });

  json& s = wf.summary();
  s["samples"] = design.rows();
  s["successful_runs"] = dataset.size();
  json targets = json::array();
  for (const auto& r : reports) {
    json t = {{"target", std::string(to_string(r.target))}, {"skipped", r.skipped}};
    if (r.skipped) {
      t["diagnostic"] = r.diagnostic;
    } else {
      t["r2_holdout"] = r.r2_holdout;
      json ranking = json::array();
      for (std::size_t p : r.ranking) ranking.push_back(std::string(kParamNames[p]));
      t["ranking"] = ranking;
    }
    targets.push_back(t);
  }
  s["targets"] = targets;
  wf.finish();
  return kExitOk;
}

int run_report(const RunConfig& cfg, std::ostream& out) {
  Workflow wf(cfg, "report", out);
  const auto ens = make_ensemble(cfg);
  TwinComparisonOptions opts;
  opts.twin_target = cfg.report_twin_target;
  opts.top_k = static_cast<std::size_t>(cfg.report_top_k);
  opts.seed = cfg.seed;
  opts.gnd_resolution = cfg.gnd_resolution;
  opts.homogenization = cfg.homogenization;
  const TwinComparison cmp = compare_twinned(*ens, cfg.material, cfg.loading, opts);

  const Provenance prov = cfg.provenance();
  wf.artifact("failure_report.csv", [&](std::ostream& os) {
    write_failure_csv(os, {cmp.base_report, cmp.twinned_report}, prov);
  });
  wf.artifact("fip_base.csv", [&](std::ostream& os) { write_fip_csv(os, cmp.base_records, prov); });
  wf.artifact("fip_twinned.csv", [&](std::ostream& os) { write_fip_csv(os, cmp.twinned_records, prov); });
  wf.artifact("curve_base.csv", [&](std::ostream& os) { write_curve_csv(os, cmp.base_run.curve, prov); });
  wf.artifact("curve_twinned.csv", [&](std::ostream& os) { write_curve_csv(os, cmp.twinned_run.curve, prov); });

  json& s = wf.summary();
  s["base_grains"] = ens->grains.size();
  s["twinned_grains"] = cmp.twinned.grains.size();
  s["twin_volume_fraction"] = cmp.twinned.twin_volume_fraction;
  s["max_curve_difference_mpa"] = cmp.max_curve_difference;
  s["relative_curve_difference"] = cmp.relative_curve_difference();
  s["base_lognormal"] = fit_json(cmp.base_fit);
  s["twinned_lognormal"] = fit_json(cmp.twinned_fit);
  s["base_critical"] = failure_json(cmp.base_report);
  s["twinned_critical"] = failure_json(cmp.twinned_report);
  wf.finish();
  return kExitOk;
}

constexpr int kExitSelftestFailed = 3;

int run_selftest(RunConfig cfg, bool write_artifacts, std::ostream& out) {
  if (cfg.experiments.empty()) cfg.experiments.push_back({std::nullopt, std::nullopt, cfg.loading.amplitude});
  const BOConfig bo = bo_config(cfg);
  const auto ens = make_ensemble(cfg);
  const Simulator sim = calibration_simulator(cfg, ens);
  const CalibrationCase calib = build_case(cfg, sim);
  const CalibrationResult res = calibrate(calib, bo, sim);
  const double initial = best_initial(res.history);
  const bool pass = res.best_objective <= 25.0 && res.best_objective < initial;
  out << "selftest: " << (pass ? "PASS" : "FAIL") << " final=" << format_double(res.best_objective)
      << " MPa best_initial=" << format_double(initial) << " MPa (threshold 25 MPa, n_initial=" << cfg.n_initial
      << ", budget=" << cfg.budget << ", lambda=" << format_double(cfg.objective.lambda) << ")\n";
  if (write_artifacts) {
    Workflow wf(cfg, "selftest", out);
    const Provenance prov = cfg.provenance();
    wf.artifact("history.csv", [&](std::ostream& os) { write_history_csv(os, res.history, prov); });
    wf.summary()["pass"] = pass;
    wf.summary()["best_objective_mpa"] = res.best_objective;
    wf.summary()["best_initial_mpa"] = std::isfinite(initial) ? json(initial) : json(nullptr);
    wf.finish();
  }
  return pass ? kExitOk : kExitSelftestFailed;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  Section top(doc, "config");
  if (top.has("seed")) {
    const json& v = top.raw("seed");
    if (!v.is_number_unsigned()) throw InvalidArgument("config.seed must be a nonnegative integer");
    cfg.seed = v.get<std::uint64_t>();
  }
  std::string dir;
  top.text("output_dir", dir);
  cfg.output_dir = resolve(base_dir, dir.empty() ? "." : dir);
  if (top.has("microstructure")) parse_microstructure(Section(top.raw("microstructure"), "microstructure"), cfg, base_dir);
  if (top.has("loading")) parse_loading(Section(top.raw("loading"), "loading"), cfg.loading);
  if (top.has("homogenization")) parse_homogenization(Section(top.raw("homogenization"), "homogenization"), cfg.homogenization);
  if (top.has("material")) parse_material(Section(top.raw("material"), "material"), cfg.material, base_dir);
  if (top.has("objective")) parse_objective(Section(top.raw("objective"), "objective"), cfg.objective);
  if (top.has("bounds")) parse_bounds(Section(top.raw("bounds"), "bounds"), cfg.bounds);
  if (top.has("calibration")) parse_calibration(Section(top.raw("calibration"), "calibration"), cfg, base_dir);
  if (top.has("sensitivity")) parse_sensitivity(Section(top.raw("sensitivity"), "sensitivity"), cfg);
  if (top.has("report")) parse_report(Section(top.raw("report"), "report"), cfg);
  top.finish();
  cfg.config_hash = fnv1a_hex(doc.dump());
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crystal plasticity calibration and fatigue analysis", "cpbo"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string config_path;
  std::map<std::string, CLI::App*> subs;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "Sample a grain ensemble"},
      {"simulate", "Run the cyclic Taylor simulation"},
      {"calibrate", "Bayesian calibration against target curves"},
      {"sensitivity", "SHAP sensitivity of curve probes"},
      {"report", "Twin / no-twin fatigue indicator report"},
      {"selftest", "Self-calibration against a pseudo-experiment"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (name != "selftest") opt->required();
    subs[name] = sub;
  }

  std::vector<const char*> argv = {"cpbo"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    set_num_threads(threads);
    const bool have_config = !config_path.empty();
    const RunConfig cfg = have_config ? load_run_config(config_path) : RunConfig{};
    if (subs["generate"]->parsed()) return run_generate(cfg, out);
    if (subs["simulate"]->parsed()) return run_simulate(cfg, out, err);
    if (subs["calibrate"]->parsed()) return run_calibrate(cfg, out);
    if (subs["sensitivity"]->parsed()) return run_sensitivity(cfg, out);
    if (subs["report"]->parsed()) return run_report(cfg, out);
    RunConfig st = cfg;
    if (!have_config) st.seed = 1;
    return run_selftest(st, have_config, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    err << "error: config: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "simulation error: " << e.what() << '\n';
    return kExitSimulation;
  }
}

}  // namespace cpbo
