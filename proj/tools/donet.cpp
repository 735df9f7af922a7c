// donet: command-line front end for training, evaluation and the analysis
// tools. Exit codes: 0 ok, 2 config error, 3 FAILED run, 4 missing artifact.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "donet/config.hpp"
#include "donet/harness.hpp"
#include "donet/kernels.hpp"
#include "donet/ode.hpp"
#include "donet/rng.hpp"
#include "donet/stability.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace donet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFailed = 3;
constexpr int kExitMissing = 4;

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::string output;
  bool quiet = false;
};

void say(const Common& c, const std::string& line) {
  if (!c.quiet) std::cout << line << '\n';
}

RunConfigFile load_config(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  if (!fs::exists(c.config)) throw ConfigError("config file not found: " + c.config);
  RunConfigFile cfg = load_run_config(c.config);
  if (c.seed_override) cfg.seed = *c.seed_override;
  return cfg;
}

// --output wins over output_dir; a seed override adds a seed<N> level.
fs::path output_dir(const Common& c, const RunConfigFile* cfg) {
  fs::path dir = !c.output.empty() ? fs::path(c.output)
                 : cfg          ? fs::path(cfg->output_dir)
                                : fs::path(".");
  if (c.seed_override) dir /= "seed" + std::to_string(*c.seed_override);
  fs::create_directories(dir);
  return dir;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print_metrics(const Common& c, const Metrics& m) {
  for (const auto& [k, v] : m) say(c, "  " + k + " = " + fmt_double(v));
}

struct LoadedRun {
  RunRecord record;
  Model model;
  fs::path record_path;
};

// Accepts a record.json path or the directory holding it.
LoadedRun load_run(const fs::path& ref) {
  fs::path path = fs::is_directory(ref) ? ref / "record.json" : ref;
  if (!fs::exists(path)) throw MissingArtifact("run record not found: " + path.string());
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw MissingArtifact("run record " + path.string() + " is unreadable: " + e.what());
  }
  RunRecord rec = run_record_from_json(j);
  const fs::path params = path.parent_path() / rec.params_file;
  if (rec.params_file.empty() || !fs::exists(params)) {
    throw MissingArtifact("parameter file not found: " + params.string());
  }
  Model model = load_model(params);
  return {std::move(rec), std::move(model), path};
}

Dataset test_split(const TrainConfig& cfg) {
  try {
    return prepare_data(cfg.data, cfg.model.map, cfg.seed).test;
  } catch (const std::runtime_error& e) {
    throw MissingArtifact(std::string("cannot load data: ") + e.what());
  }
}

void write_loss_curve(const RunRecord& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "epoch,loss,train_accuracy\n";
  for (std::size_t e = 0; e < r.loss_curve.size(); ++e) {
    out << e << ',' << r.loss_curve[e] << ',' << r.accuracy_curve[e] << '\n';
  }
}

int cmd_train(const Common& c) {
  const RunConfigFile cfg = load_config(c);
  const TrainConfig tc = cfg.train_config();
  const fs::path dir = output_dir(c, &cfg);
  say(c, "training " + std::string(to_string(tc.model.kind)) + " depth " +
             std::to_string(tc.model.depth) + " seed " + std::to_string(tc.seed));
  RunOutput out = run_experiment(tc, cfg.eval_config());
  out.record.params_file = "params.bin";
  save_model(out.model, dir / "params.bin");
  write_json(to_json(out.record), dir / "record.json");
  write_loss_curve(out.record, dir / "loss_curve.csv");
  write_metrics_csv(out.record.metrics, dir / "metrics.csv");
  const Dataset test = test_split(tc);
  write_coefficients_csv(coefficient_report(out.model, &test.x), dir / "coefficients.csv");
  print_metrics(c, out.record.metrics);
  say(c, "fraction_active = " + fmt_double(out.record.fraction_active));
  say(c, "wrote " + dir.string());
  if (out.record.failed) {
    std::cerr << "run FAILED: " << out.record.failure_reason << '\n';
    return kExitFailed;
  }
  return kExitOk;
}

EvalConfig eval_section(const Common& c, const RunRecord& rec) {
  EvalConfig e;
  if (!c.config.empty()) e = load_config(c).eval_config();
  return resolve_seeds(e, rec.config.seed);
}

int cmd_eval(const Common& c, const std::string& run) {
  LoadedRun lr = load_run(run);
  const EvalConfig e = eval_section(c, lr.record);
  const Dataset test = test_split(lr.record.config);
  const Evaluation ev = evaluate(ModelClassifier(lr.model), test, e);
  const fs::path dir = c.output.empty() ? lr.record_path.parent_path() : output_dir(c, nullptr);
  fs::create_directories(dir);
  write_metrics_csv(ev.metrics, dir / "eval_metrics.csv");
  write_predictions_csv(ev, test, dir / "predictions.csv");
  print_metrics(c, ev.metrics);
  return kExitOk;
}

int cmd_attack(const Common& c, const std::string& run, const std::string& kind,
               const std::vector<double>& epsilons, double alpha, std::size_t iters) {
  LoadedRun lr = load_run(run);
  EvalConfig e;
  AttackSpec spec;
  try {
    spec.kind = perturb::parse_attack_kind(kind);
    spec.epsilons = epsilons;
    spec.alpha = alpha;
    spec.iters = iters;
    for (double eps : epsilons) {
      perturb::AttackConfig{spec.kind, eps, alpha, iters, 0}.validate();
    }
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  e.attacks.push_back(spec);
  e = resolve_seeds(e, lr.record.config.seed);
  const Dataset test = test_split(lr.record.config);
  const Evaluation ev = evaluate(ModelClassifier(lr.model), test, e);
  const fs::path dir = c.output.empty() ? lr.record_path.parent_path() : output_dir(c, nullptr);
  fs::create_directories(dir);
  write_metrics_csv(ev.metrics, dir / ("attack_" + kind + "_metrics.csv"));
  write_predictions_csv(ev, test, dir / ("attack_" + kind + "_predictions.csv"));
  print_metrics(c, ev.metrics);
  return kExitOk;
}

int cmd_landscape(const Common& c, const std::string& run) {
  LoadedRun lr = load_run(run);
  LandscapeSection ls;
  if (!c.config.empty()) ls = load_config(c).landscape.value_or(LandscapeSection{});
  const Dataset test = test_split(lr.record.config);
  if (ls.sample_index >= test.size()) {
    throw ConfigError("landscape.sample_index " + std::to_string(ls.sample_index) +
                      " is outside the test split of " + std::to_string(test.size()));
  }
  const Dataset one = test.slice(ls.sample_index, ls.sample_index + 1);
  const std::uint64_t seed = sub_seed(lr.record.config.seed, "landscape");
  const LandscapeGrid grid =
      landscape_scan(ModelClassifier(lr.model), one.x, one.y[0], ls.G, ls.step, seed);
  const fs::path dir = (c.output.empty() ? lr.record_path.parent_path() : output_dir(c, nullptr)) /
                       "landscape";
  fs::create_directories(dir);
  write_landscape(grid, dir);
  say(c, "center loss = " + fmt_double(grid.loss_at(0, 0)) + ", wrote " + dir.string());
  return kExitOk;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

int cmd_stability(const Common& c, std::optional<std::string> matrix, std::optional<double> lambda,
                  std::optional<std::string> rho, std::optional<std::string> dynamics,
                  std::optional<std::string> start) {
  StabilitySection s;
  const RunConfigFile* cfgp = nullptr;
  RunConfigFile cfg;
  if (!c.config.empty()) {
    cfg = load_config(c);
    cfgp = &cfg;
    s = cfg.stability.value_or(StabilitySection{});
  }
  if (matrix) s.matrix = *matrix;
  if (lambda) s.lambda = *lambda;
  if (dynamics) s.dynamics = *dynamics;
  if (start) s.start = parse_list(*start);
  try {
    if (rho) s.rho = ode::parse_rho_kind(*rho);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(s.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");

  stability::StabilityReport report;
  try {
    if (!s.matrix.empty()) {
      const linalg::Matrix j = stability::parse_matrix(s.matrix);
      report = stability::analyze_jacobian(stability::Vec(j.rows(), 0.0), j, s.lambda, s.rho);
    } else {
      const stability::DynamicsHandle f = stability::dynamics_by_id(s.dynamics);
      stability::Vec x0 = s.start.empty() ? stability::Vec(f.dimension, 0.1) : s.start;
      report = stability::analyze(f, x0, s.lambda, s.rho);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  json j = stability::to_json(report);
  if (!s.matrix.empty()) j["matrix"] = s.matrix;
  else j["dynamics"] = s.dynamics;
  if (!c.quiet) std::cout << j.dump(2) << '\n';
  if (cfgp || !c.output.empty()) write_json(j, output_dir(c, cfgp) / "stability.json");
  return kExitOk;
}

// Damped linear test system used by ode-check.
ode::DampedOdeSpec check_system(double lambda, ode::RhoKind rho, double T, std::size_t steps) {
  ode::DampedOdeSpec spec;
  spec.lambda = lambda;
  spec.rho = rho;
  spec.f = [](const ode::State& x, double) {
    return ode::State{-0.2 * x[0] + x[1], -x[0] - 0.2 * x[1]};
  };
  spec.x0 = {1.0, 0.0};
  spec.T = T;
  spec.steps = steps;
  return spec;
}

int cmd_ode_check(const Common& c, std::optional<double> lambda, std::optional<std::string> rho,
                  std::optional<double> dt, std::optional<double> horizon) {
  OdeSection o;
  const RunConfigFile* cfgp = nullptr;
  RunConfigFile cfg;
  if (!c.config.empty()) {
    cfg = load_config(c);
    cfgp = &cfg;
    o = cfg.ode.value_or(OdeSection{});
  }
  if (lambda) o.lambda = *lambda;
  if (dt) o.dt = *dt;
  if (horizon) o.T = *horizon;
  try {
    if (rho) o.rho = ode::parse_rho_kind(*rho);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(o.lambda >= 0.0) || !(o.dt > 0.0) || !(o.T > 0.0) || o.dt > o.T) {
    throw ConfigError("need lambda >= 0 and 0 < dt <= T");
  }
  const auto steps = static_cast<std::size_t>(std::llround(o.T / o.dt));

  json report;
  report["lambda"] = o.lambda;
  report["rho"] = std::string(ode::to_string(o.rho));
  report["T"] = o.T;
  report["steps"] = steps;

  const ode::DampedOdeSpec spec = check_system(o.lambda, o.rho, o.T, steps);
  // The identity holds for the exact solution, so it is checked on the
  // fourth-order trajectory; the first-order scheme's own gap is O(dt).
  const ode::Trajectory traj = ode::integrate_rk4(spec);
  report["proposition1_residual"] = ode::verify_proposition1(spec, traj);
  report["proposition1_residual_exponential_scheme"] =
      ode::verify_proposition1(spec, ode::integrate_exponential(spec));

  const auto f1 = [](const ode::State& x) {
    return ode::State{std::tanh(x[0] - x[1]), std::sin(x[0]) + 0.5 * x[1]};
  };
  const ode::LimitGaps gaps = ode::interpolation_limit_check(f1, {0.3, -0.7}, 1.0);
  report["limit_check"] = {{"res_limit_gap", gaps.res_limit_gap},
                           {"nonres_limit_gap", gaps.nonres_limit_gap}};

  const std::vector<std::size_t> counts{100, 300, 1000, 3000, 10000};
  json conv = json::array();
  auto study = [&](const std::string& name, const ode::DampedOdeSpec& s,
                   const ode::Integrator& scheme) {
    ode::DampedOdeSpec ref_spec = s;
    ref_spec.steps = 100000;
    const ode::State reference = ode::integrate_rk4(ref_spec).back();
    const ode::ConvergenceStudy cs = ode::convergence_study(s, scheme, counts, reference);
    json pts = json::array();
    for (const auto& p : cs.points) pts.push_back({{"dt", p.dt}, {"error", p.error}});
    conv.push_back({{"scheme", name}, {"slope", cs.slope}, {"points", pts}});
    return cs;
  };
  const ode::DampedOdeSpec euler_spec = check_system(o.lambda, ode::RhoKind::One, 1.0, 1);
  const ode::ConvergenceStudy net1 = study("damped_euler_net1", euler_spec, [](const auto& s) {
    return ode::integrate_damped_euler(s, ode::EulerVariant::Net1);
  });
  study("exponential", check_system(o.lambda, o.rho, 1.0, 1), ode::integrate_exponential);
  report["convergence"] = conv;

  json probe = json::array();
  for (double ldt : {0.5, 1.0, 1.9, 2.0, 2.1, 2.5}) {
    probe.push_back({{"lambda_dt", ldt},
                     {"verdict", std::string(ode::to_string(ode::euler_stability_probe(ldt, 1.0, 200)))}});
  }
  report["euler_probe"] = probe;

  if (!c.quiet) std::cout << report.dump(2) << '\n';
  if (cfgp || !c.output.empty()) {
    const fs::path dir = output_dir(c, cfgp);
    write_json(report, dir / "ode_report.json");
    ode::write_convergence_csv(net1, dir / "convergence_net1.csv");
    if (steps <= 100000) ode::write_trajectory_csv(traj, dir / "trajectory.csv");
  }
  return kExitOk;
}

int cmd_ensemble(const Common& c, const std::vector<std::string>& run_refs) {
  std::vector<std::string> refs = run_refs;
  RunConfigFile cfg;
  const RunConfigFile* cfgp = nullptr;
  if (!c.config.empty()) {
    cfg = load_config(c);
    cfgp = &cfg;
    if (refs.empty() && cfg.ensemble) refs = cfg.ensemble->runs;
  }
  if (refs.size() < 2) throw ConfigError("ensemble needs at least 2 runs");
  std::vector<LoadedRun> runs;
  for (const std::string& r : refs) runs.push_back(load_run(r));
  const TrainConfig& first = runs.front().record.config;
  const json data0 = to_json(first)["data"];
  for (const LoadedRun& r : runs) {
    if (to_json(r.record.config)["data"] != data0) {
      throw ConfigError("ensemble members were trained on different data");
    }
  }
  std::vector<const Model*> members;
  for (const LoadedRun& r : runs) members.push_back(&r.model);
  EvalConfig e = cfgp ? cfg.eval_config() : EvalConfig{};
  e = resolve_seeds(e, first.seed);
  const Dataset test = test_split(first);
  EnsembleResult res;
  try {
    res = ensemble_eval(members, test, e);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  const fs::path dir = output_dir(c, cfgp);
  write_metrics_csv(res.ensemble, dir / "ensemble_metrics.csv");
  write_metrics_csv(res.improvement, dir / "ensemble_improvement.csv");
  write_member_metrics_csv(res, dir / "member_metrics.csv");
  say(c, "ensemble:");
  print_metrics(c, res.ensemble);
  say(c, "improvement over single-run mean:");
  print_metrics(c, res.improvement);
  return kExitOk;
}

int cmd_sweep(const Common& c) {
  const RunConfigFile cfg = load_config(c);
  const TrainConfig base = cfg.train_config();
  const SweepSection s = cfg.sweep.value_or(SweepSection{});
  std::vector<std::uint64_t> seeds = s.seeds;
  if (c.seed_override) seeds = {*c.seed_override};
  const fs::path dir = output_dir(c, &cfg);
  say(c, "sweep: " + std::to_string(s.intervals.size()) + " intervals x " +
             std::to_string(seeds.size()) + " seeds");
  const SweepResult res = init_sweep(base, s.intervals, seeds, cfg.eval_config());
  write_sweep_runs_csv(res, dir / "runs.csv");
  json summary = json::array();
  for (std::size_t i = 0; i < res.intervals.size(); ++i) {
    const InitScheme& iv = res.intervals[i];
    std::ostringstream name;
    name << "summary_U" << iv.lambda_lo << '_' << iv.lambda_hi << ".csv";
    write_summary_csv(res.summaries[i], dir / name.str());
    json row{{"interval", {iv.lambda_lo, iv.lambda_hi}}};
    for (const auto& [metric, ms] : res.summaries[i]) {
      row["metrics"][metric] = {{"mean", ms.mean},
                                {"sd", ms.sd ? json(*ms.sd) : json(nullptr)},
                                {"n_runs", ms.n_runs},
                                {"n_failed", ms.n_failed}};
    }
    summary.push_back(row);
    std::ostringstream line;
    line << "U[" << iv.lambda_lo << ", " << iv.lambda_hi << "]";
    if (auto it = res.summaries[i].find("clean"); it != res.summaries[i].end()) {
      line << " clean " << fmt_double(it->second.mean) << " (" << it->second.n_runs
           << " runs, " << it->second.n_failed << " failed)";
    }
    say(c, line.str());
  }
  write_json(summary, dir / "summary.json");
  return kExitOk;
}

void apply_thread_env() {
  if (const char* env = std::getenv("DONET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      throw ConfigError(std::string("DONET_THREADS must be a positive integer, got '") + env + "'");
    }
    kernels::set_max_threads(static_cast<int>(n));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"donet: damped residual networks, ODE and robustness tools"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed_override = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", common.config, "JSON run config");
    if (needs_config) opt->required();
    sub->add_option("--seed-override", seed_override, "replace the config seed");
    sub->add_option("--output", common.output, "output directory");
    sub->add_flag("--quiet", common.quiet, "suppress progress output");
  };

  auto* train = app.add_subcommand("train", "train one model and write its run record");
  add_common(train, true);

  std::string run;
  auto* eval = app.add_subcommand("eval", "evaluate a trained run on clean, noisy and attacked data");
  add_common(eval, false);
  eval->add_option("--run", run, "record.json or its directory")->required();

  std::string attack_kind = "fgsm";
  std::vector<double> epsilons{2.0 / 255.0};
  double alpha = 2.0 / 255.0;
  std::size_t iters = 10;
  auto* attack = app.add_subcommand("attack", "attack a trained run");
  add_common(attack, false);
  attack->add_option("--run", run, "record.json or its directory")->required();
  attack->add_option("--kind", attack_kind, "fgsm | ifgsm | pgd");
  attack->add_option("--epsilon", epsilons, "one or more radii")->expected(1, -1);
  attack->add_option("--alpha", alpha, "step size");
  attack->add_option("--iters", iters, "iterations for ifgsm/pgd");

  auto* landscape = app.add_subcommand("landscape", "scan the loss around one test sample");
  add_common(landscape, false);
  landscape->add_option("--run", run, "record.json or its directory")->required();

  std::optional<std::string> matrix, rho, dynamics, start;
  std::optional<double> lambda, dt, horizon;
  auto* stab = app.add_subcommand("stability", "equilibrium spectrum with and without damping");
  add_common(stab, false);
  stab->add_option("--matrix", matrix, "companion:<poly> | diag:a,b | rows:a,b;c,d");
  stab->add_option("--dynamics", dynamics, "cubic | quadratic | neg_identity:n | linear:...");
  stab->add_option("--start", start, "comma separated Newton start point");
  stab->add_option("--lambda", lambda, "damping");
  stab->add_option("--rho", rho, "one | lambda_plus_one");

  auto* odec = app.add_subcommand("ode-check", "damped ODE scheme checks");
  add_common(odec, false);
  odec->add_option("--lambda", lambda, "damping");
  odec->add_option("--rho", rho, "one | lambda_plus_one");
  odec->add_option("--dt", dt, "step for the residual check");
  odec->add_option("--T", horizon, "horizon for the residual check");

  std::vector<std::string> runs;
  auto* ens = app.add_subcommand("ensemble", "mean-of-softmax ensemble over trained runs");
  add_common(ens, false);
  ens->add_option("--runs", runs, "record.json files or run directories");

  auto* sweep = app.add_subcommand("sweep", "lambda initialization sweep");
  add_common(sweep, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed-override") > 0) common.seed_override = seed_override;
  }

  try {
    apply_thread_env();
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, run);
    if (*attack) return cmd_attack(common, run, attack_kind, epsilons, alpha, iters);
    if (*landscape) return cmd_landscape(common, run);
    if (*stab) return cmd_stability(common, matrix, lambda, rho, dynamics, start);
    if (*odec) return cmd_ode_check(common, lambda, rho, dt, horizon);
    if (*ens) return cmd_ensemble(common, runs);
    if (*sweep) return cmd_sweep(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
