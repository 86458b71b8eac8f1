#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "snellmesh/analysis.hpp"
#include "snellmesh/builtins.hpp"
#include "snellmesh/errors.hpp"
#include "snellmesh/experiment.hpp"
#include "snellmesh/mesh.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/model_io.hpp"
#include "snellmesh/oracle.hpp"
#include "snellmesh/particle.hpp"
#include "snellmesh/report.hpp"

namespace snell::cli {

using nlohmann::json;

enum ExitCode : int { kPass = 0, kCriterionFailed = 1, kUsage = 2, kModelError = 3 };

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"oracle",      "simulate", "price",      "convergence",
                                                 "bias",        "bound",    "robustness"};
  return names;
}

inline constexpr const char* kOutEnv = "SNELLMESH_OUT";

inline constexpr const char* kSeedPolicy =
    "run r of a batch uses seed = splitmix(master ^ 0x5eed5eed5eed5eed, r); convergence batches use "
    "master = splitmix(seed, N); each run derives one stream per (time step, phase) with phases "
    "init/selection/mutation; robustness perturbations use stream (0, perturbation) of --seed";

struct RunConfig {
  std::string suite;  // empty: write the manifest only
  std::string model = "toychain";
  std::string config_path;
  std::size_t n_particles = 1000;
  std::uint64_t seed = 1;
  std::size_t runs = 200;
  std::vector<int> p_list = {1, 2, 4};
  std::optional<double> epsilon;
  std::string out = "snellmesh-out";
  std::optional<std::string> state;
  std::vector<std::size_t> n_list = {250, 1000, 4000, 16000};
  std::vector<double> eps_grid = {0.05, 0.1, 0.2};
  std::size_t max_paths = 1'000'000;
  std::size_t max_policy_bits = 20;
  double slope_min = -0.65;
  double slope_max = -0.35;
  double bias_se_multiplier = 2.0;
  double tail_se_multiplier = 3.0;
  std::size_t min_error_runs = 30;
  std::size_t min_bias_runs = 100;
  std::size_t min_tail_runs = 1000;
  std::size_t trials = 100;
  double perturbation = 0.1;
  std::string kernel = "markov";
  int bound_p = 2;
  bool concentration = false;
  bool dump_particles = false;
  bool mesh_csv = false;
};

// Help text requested; not an error.
struct HelpRequested {
  std::string text;
};

inline json to_json(const RunConfig& c) {
  json j;
  j["suite"] = c.suite;
  j["model"] = c.model;
  j["config_path"] = c.config_path;
  j["n_particles"] = c.n_particles;
  j["seed"] = c.seed;
  j["runs"] = c.runs;
  j["p_list"] = c.p_list;
  j["epsilon"] = c.epsilon ? json(*c.epsilon) : json(nullptr);
  j["out"] = c.out;
  j["state"] = c.state ? json(*c.state) : json(nullptr);
  j["n_list"] = c.n_list;
  j["eps_grid"] = c.eps_grid;
  j["max_paths"] = c.max_paths;
  j["max_policy_bits"] = c.max_policy_bits;
  j["slope_min"] = c.slope_min;
  j["slope_max"] = c.slope_max;
  j["bias_se_multiplier"] = c.bias_se_multiplier;
  j["tail_se_multiplier"] = c.tail_se_multiplier;
  j["min_error_runs"] = c.min_error_runs;
  j["min_bias_runs"] = c.min_bias_runs;
  j["min_tail_runs"] = c.min_tail_runs;
  j["trials"] = c.trials;
  j["perturbation"] = c.perturbation;
  j["kernel"] = c.kernel;
  j["bound_p"] = c.bound_p;
  j["concentration"] = c.concentration;
  j["dump_particles"] = c.dump_particles;
  j["mesh_csv"] = c.mesh_csv;
  return j;
}

namespace detail {

template <class T>
T read_key(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  const std::string loc = where + ": key '" + key + "'";
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(loc + " expects a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(loc + " expects a string");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw ConfigError(loc + " expects a non-negative integer");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(loc + " expects an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(loc + " expects a number");
  } else {
    if (!v.is_array()) throw ConfigError(loc + " expects an array");
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(loc + " has elements of the wrong type");
    }
  }
  return v.get<T>();
}

inline void apply_json(RunConfig& c, const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "suite") c.suite = read_key<std::string>(j, key, where);
    else if (key == "model") c.model = read_key<std::string>(j, key, where);
    else if (key == "n_particles") c.n_particles = read_key<std::size_t>(j, key, where);
    else if (key == "seed") c.seed = read_key<std::uint64_t>(j, key, where);
    else if (key == "runs") c.runs = read_key<std::size_t>(j, key, where);
    else if (key == "p_list") c.p_list = read_key<std::vector<int>>(j, key, where);
    else if (key == "epsilon") {
      if (value.is_null()) c.epsilon.reset();
      else c.epsilon = read_key<double>(j, key, where);
    } else if (key == "out") c.out = read_key<std::string>(j, key, where);
    else if (key == "state") {
      if (value.is_null()) c.state.reset();
      else c.state = read_key<std::string>(j, key, where);
    } else if (key == "n_list") c.n_list = read_key<std::vector<std::size_t>>(j, key, where);
    else if (key == "eps_grid") c.eps_grid = read_key<std::vector<double>>(j, key, where);
    else if (key == "max_paths") c.max_paths = read_key<std::size_t>(j, key, where);
    else if (key == "max_policy_bits") c.max_policy_bits = read_key<std::size_t>(j, key, where);
    else if (key == "slope_min") c.slope_min = read_key<double>(j, key, where);
    else if (key == "slope_max") c.slope_max = read_key<double>(j, key, where);
    else if (key == "bias_se_multiplier") c.bias_se_multiplier = read_key<double>(j, key, where);
    else if (key == "tail_se_multiplier") c.tail_se_multiplier = read_key<double>(j, key, where);
    else if (key == "min_error_runs") c.min_error_runs = read_key<std::size_t>(j, key, where);
    else if (key == "min_bias_runs") c.min_bias_runs = read_key<std::size_t>(j, key, where);
    else if (key == "min_tail_runs") c.min_tail_runs = read_key<std::size_t>(j, key, where);
    else if (key == "trials") c.trials = read_key<std::size_t>(j, key, where);
    else if (key == "perturbation") c.perturbation = read_key<double>(j, key, where);
    else if (key == "kernel") c.kernel = read_key<std::string>(j, key, where);
    else if (key == "bound_p") c.bound_p = read_key<int>(j, key, where);
    else if (key == "concentration") c.concentration = read_key<bool>(j, key, where);
    else if (key == "dump_particles") c.dump_particles = read_key<bool>(j, key, where);
    else if (key == "mesh_csv") c.mesh_csv = read_key<bool>(j, key, where);
    else throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline void check_config(const RunConfig& c) {
  if (!c.suite.empty() && std::find(suite_names().begin(), suite_names().end(), c.suite) == suite_names().end())
    throw ConfigError("suite '" + c.suite + "' is not one of oracle, simulate, price, convergence, bias, bound, robustness");
  if (c.n_particles < 1) throw ConfigError("n_particles must be >= 1");
  if (c.runs < 1) throw ConfigError("runs must be >= 1");
  if (c.p_list.empty()) throw ConfigError("p_list must not be empty");
  for (int p : c.p_list)
    if (p < 1) throw ConfigError("p_list entries must be >= 1");
  if (c.bound_p < 1) throw ConfigError("bound_p must be >= 1");
  for (auto n : c.n_list)
    if (n < 1) throw ConfigError("n_list entries must be >= 1");
  if (c.kernel != "markov" && c.kernel != "criteria") throw ConfigError("kernel must be 'markov' or 'criteria'");
  if (c.slope_min > c.slope_max) throw ConfigError("slope_min must not exceed slope_max");
}

}  // namespace detail

/// Resolves defaults < config file < SNELLMESH_OUT (output dir only) < flags.
/// Throws ConfigError (or CLI::ParseError) on bad input and HelpRequested for --help.
inline RunConfig parse_config(const std::vector<std::string>& args,
                              const std::function<const char*(const char*)>& getenv = [](const char* k) {
                                return std::getenv(k);
                              }) {
  CLI::App app{"Snell envelopes with multiplicative criteria: particle/stochastic-mesh estimator and exact oracles",
               "snellmesh"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string model, config_path, out, state, kernel;
  std::uint64_t seed = 0;
  std::size_t n_particles = 0, runs = 0, trials = 0;
  double epsilon = 0.0;
  int bound_p = 0;
  std::vector<int> p_list;
  std::vector<std::size_t> n_list;
  std::vector<double> eps_grid;
  bool concentration = false, dump_particles = false, mesh_csv = false;

  auto* o_model = app.add_option("--model", model, "builtin name (toychain, ar1, indicator) or model file path");
  auto* o_config = app.add_option("--config", config_path, "JSON run configuration file");
  auto* o_seed = app.add_option("--seed", seed, "master seed (64-bit unsigned)");
  auto* o_n = app.add_option("--n-particles", n_particles, "number of particles N");
  auto* o_runs = app.add_option("--runs", runs, "independent runs per N");
  auto* o_eps = app.add_option("--epsilon", epsilon, "selection level epsilon applied to every step");
  auto* o_out = app.add_option("--out", out, "output directory (env SNELLMESH_OUT)");
  auto* o_state = app.add_option("--state", state, "query state x for v_hat_0(x)");
  auto* o_p = app.add_option("--p", p_list, "Lp exponents for error reports");
  auto* o_nlist = app.add_option("--n-list", n_list, "particle counts for the convergence suite");
  auto* o_grid = app.add_option("--eps-grid", eps_grid, "deviation grid for the concentration check");
  auto* o_trials = app.add_option("--trials", trials, "randomized perturbations for the robustness suite");
  auto* o_kernel = app.add_option("--kernel", kernel, "robustness kernel: markov or criteria");
  auto* o_bound_p = app.add_option("--bound-p", bound_p, "p for the bound suite");
  auto* o_conc = app.add_flag("--concentration", concentration, "bound suite: also run the tail check");
  auto* o_dump = app.add_flag("--dump-particles", dump_particles, "simulate: write particles.csv");
  auto* o_mesh = app.add_flag("--mesh-csv", mesh_csv, "price: write mesh.csv");

  for (const auto& name : suite_names()) app.add_subcommand(name, "run the " + name + " suite");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  }

  RunConfig c;
  if (o_config->count()) {
    c.config_path = config_path;
    json j;
    try {
      j = json::parse(report::read_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError(config_path + ": " + e.what());
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
    detail::apply_json(c, j, config_path);
  }
  if (const char* env = getenv(kOutEnv); env && *env) c.out = env;

  for (const auto* sub : app.get_subcommands()) c.suite = sub->get_name();
  if (o_model->count()) c.model = model;
  if (o_seed->count()) c.seed = seed;
  if (o_n->count()) c.n_particles = n_particles;
  if (o_runs->count()) c.runs = runs;
  if (o_eps->count()) c.epsilon = epsilon;
  if (o_out->count()) c.out = out;
  if (o_state->count()) c.state = state;
  if (o_p->count()) c.p_list = p_list;
  if (o_nlist->count()) c.n_list = n_list;
  if (o_grid->count()) c.eps_grid = eps_grid;
  if (o_trials->count()) c.trials = trials;
  if (o_kernel->count()) c.kernel = kernel;
  if (o_bound_p->count()) c.bound_p = bound_p;
  if (o_conc->count()) c.concentration = concentration;
  if (o_dump->count()) c.dump_particles = dump_particles;
  if (o_mesh->count()) c.mesh_csv = mesh_csv;
  detail::check_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Suites

struct Artifact {
  std::string file;
  std::string content;
};

struct SuiteResult {
  std::vector<Artifact> artifacts;
  bool pass = true;
  std::string first_failed;
  json stdout_summary;  // printed to stdout after the artifacts are written
  std::string stdout_text;

  void criterion(const std::string& name, bool ok) {
    if (!ok && pass) first_failed = name;
    pass = pass && ok;
  }
};

namespace detail {

// Usage-level error raised while running a suite (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline State parse_state(const MarkovModel& model, const std::optional<std::string>& text) {
  if (model.spaces.empty()) throw UsageError("model has no state spaces");
  if (!text) {
    if (model.spaces[0].is_finite()) return State::category(0);
    Stream probe(0);
    return sample_initial(model, probe);
  }
  try {
    std::size_t used = 0;
    if (model.spaces[0].is_finite()) {
      const auto idx = std::stoull(*text, &used);
      if (used != text->size() || idx >= model.spaces[0].size) throw std::invalid_argument("range");
      return State::category(static_cast<std::size_t>(idx));
    }
    const double x = std::stod(*text, &used);
    if (used != text->size()) throw std::invalid_argument("trailing");
    return State::point(x);
  } catch (const std::exception&) {
    throw UsageError("--state '" + *text + "' is not a point of E_0");
  }
}

inline FiniteTables finite_tables(const MarkovModel& model, const std::string& suite) {
  if (!model.is_finite()) throw UsageError("suite '" + suite + "' needs a finite model (exact oracle)");
  return tabulate(model);
}

inline json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline SuiteResult suite_oracle(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  const FiniteTables t = finite_tables(model, "oracle");
  const OracleLimits limits{cfg.max_paths, cfg.max_policy_bits};
  const ValueTables v = snell_with_criteria(t);
  const EtaFlow flow = compute_eta_flow(t);

  report::CsvTable csv({"k", "state", "v", "eta"});
  for (std::size_t k = 0; k <= t.horizon; ++k)
    for (Eigen::Index x = 0; x < v[k].size(); ++x)
      csv.row({std::to_string(k), std::to_string(x), report::num(v[k](x)), report::num(flow.eta[k](x))});

  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["model"] = model.name;
  j["horizon"] = t.horizon;
  j["normalizer"] = flow.normalizer;
  j["criteria_masses"] = flow.masses;
  j["v0"] = vec_json(v[0]);
  j["eta0_v0"] = t.initial.dot(v[0]);
  json equiv, optimal;
  try {
    const double d = path_equivalence_discrepancy(t, snell_path_space(t, limits), v);
    equiv = {{"computed", true}, {"discrepancy", d}, {"tolerance", 1e-12}};
    res.criterion("path_equivalence", d <= 1e-12);
  } catch (const EnumerationTooLarge& e) {
    equiv = {{"computed", false}, {"reason", e.what()}};
  }
  try {
    const auto check = verify_optimality(t, limits);
    optimal = {{"computed", true},      {"best_policy_value", check.best_value}, {"snell_value", check.snell_value},
               {"gap", check.gap},      {"policies", check.policies},          {"tolerance", 1e-10}};
    res.criterion("optimality_gap", check.gap <= 1e-10);
  } catch (const EnumerationTooLarge& e) {
    optimal = {{"computed", false}, {"reason", e.what()}};
  }
  j["path_equivalence"] = equiv;
  j["optimality"] = optimal;
  j["pass"] = res.pass;
  j["first_failed"] = res.first_failed;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"oracle.csv", csv.str()});
  res.artifacts.push_back({"oracle.json", j.dump(2) + "\n"});
  res.stdout_text = csv.str();
  res.stdout_summary = j;
  return res;
}

inline SuiteResult suite_simulate(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  const auto traj = run_particle_system(model, cfg.n_particles, cfg.seed);
  report::CsvTable csv({"k", "phase", "eta_G", "extinct"});
  for (std::size_t k = 0; k < traj.mutated.size(); ++k) {
    const bool dies = traj.extinction_step && *traj.extinction_step == k;
    const std::string mass = k < traj.criteria_mass.size() ? report::num(traj.criteria_mass[k]) : "";
    csv.row({std::to_string(k), "mutation", mass, dies ? "1" : "0"});
    if (k < traj.selected.size())
      csv.row({std::to_string(k), "selection", report::num(occupation_measure(traj.selected[k]).criteria_mass()), "0"});
  }
  res.artifacts.push_back({"simulate.csv", csv.str()});
  if (cfg.dump_particles) {
    report::CsvTable dump({"k", "i", "state"});
    for (const auto& cloud : traj.mutated)
      for (std::size_t i = 0; i < cloud.size(); ++i)
        dump.row({std::to_string(cloud.step), std::to_string(i), cloud.particles[i].to_string()});
    res.artifacts.push_back({"particles.csv", dump.str()});
  }
  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["N"] = cfg.n_particles;
  j["seed"] = cfg.seed;
  j["Z_hat"] = traj.normalizer;
  j["extinct"] = traj.extinct();
  j["extinction_step"] = traj.extinction_step ? json(*traj.extinction_step) : json(nullptr);
  j["criteria_mass"] = traj.criteria_mass;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"simulate.json", j.dump(2) + "\n"});
  res.stdout_text = csv.str();
  res.stdout_summary = j;
  return res;
}

inline SuiteResult suite_price(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  const State query = parse_state(model, cfg.state);
  const auto start = std::chrono::steady_clock::now();
  const auto est = backward_mesh(model, run_particle_system(model, cfg.n_particles, cfg.seed));
  double v_hat = 0.0, v_eta0 = 0.0;
  if (est.valid) {
    v_hat = evaluate_envelope(model, est, 0, query);
    for (double v : est.values[0]) v_eta0 += v;
    v_eta0 /= static_cast<double>(est.values[0].size());
  }
  const double runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["model"] = model.name;
  j["state"] = query.to_string();
  j["v_hat_0"] = v_hat;
  j["v_hat_0_eta0_mean"] = v_eta0;
  j["N"] = cfg.n_particles;
  j["seed"] = cfg.seed;
  j["extinct"] = !est.valid;
  j["Z_hat"] = est.trajectory->normalizer;
  if (model.is_finite() && query.is_finite()) j["oracle_v0"] = snell_with_criteria(model)[0](static_cast<Eigen::Index>(query.index()));
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"price.json", j.dump(2) + "\n"});
  if (cfg.mesh_csv && est.valid) {
    report::CsvTable mesh({"k", "i", "state", "v_hat"});
    for (std::size_t k = 0; k < est.values.size(); ++k) {
      const auto& cloud = est.trajectory->mutated[k];
      for (std::size_t i = 0; i < cloud.size(); ++i)
        mesh.row({std::to_string(k), std::to_string(i), cloud.particles[i].to_string(), report::num(est.values[k][i])});
    }
    res.artifacts.push_back({"mesh.csv", mesh.str()});
  }
  j.erase("config");
  j["runtime_ms"] = runtime_ms;
  res.stdout_summary = j;
  return res;
}

inline double oracle_value(const FiniteTables& t, const State& query) {
  return snell_with_criteria(t)[0](static_cast<Eigen::Index>(query.index()));
}

inline SuiteResult suite_convergence(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  const FiniteTables t = finite_tables(model, "convergence");
  const State query = parse_state(model, cfg.state);
  const double oracle = oracle_value(t, query);

  std::vector<RunResult> all;
  report::CsvTable runs_csv({"N", "run", "seed", "v_hat", "extinct"});
  for (std::size_t n : cfg.n_list) {
    const auto batch = run_batch(model, n, mix_seed(cfg.seed, n), cfg.runs, query);
    for (std::size_t r = 0; r < batch.size(); ++r)
      runs_csv.row({std::to_string(n), std::to_string(r), std::to_string(batch[r].seed), report::num(batch[r].v_hat),
                    batch[r].extinct ? "1" : "0"});
    all.insert(all.end(), batch.begin(), batch.end());
  }
  ErrorReport rep;
  try {
    rep = empirical_error_stats(all, oracle, cfg.p_list, cfg.min_error_runs);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  const std::string lo = rep.slope ? report::num(rep.slope->lo) : "";
  const std::string hi = rep.slope ? report::num(rep.slope->hi) : "";
  report::CsvTable csv({"N", "p", "error", "bound", "slope_lo", "slope_hi"});
  json levels = json::array();
  res.criterion("slope_defined", rep.slope.has_value());
  if (rep.slope)
    res.criterion("slope_in_window", rep.slope->slope >= cfg.slope_min && rep.slope->slope <= cfg.slope_max);
  for (const auto& level : rep.levels) {
    json lj = {{"N", level.n_particles},           {"runs", level.runs},
               {"mean", level.mean},               {"standard_error", level.standard_error},
               {"extinction_rate", level.extinction_rate}};
    for (const auto& [p, err] : level.lp_errors) {
      const auto bound = theoretical_lp_bound(model, p, level.n_particles, query.index());
      csv.row({std::to_string(level.n_particles), std::to_string(p), report::num(err), report::num(bound.bound), lo, hi});
      lj["L" + std::to_string(p)] = err;
      lj["bound_L" + std::to_string(p)] = bound.bound;
      res.criterion("bound_dominates_L" + std::to_string(p) + "_N" + std::to_string(level.n_particles),
                    bound.bound >= err);
    }
    levels.push_back(lj);
  }
  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["oracle"] = oracle;
  j["levels"] = levels;
  j["slope"] = rep.slope ? json(rep.slope->slope) : json(nullptr);
  j["slope_ci"] = rep.slope ? json({rep.slope->lo, rep.slope->hi}) : json(nullptr);
  j["slope_window"] = {cfg.slope_min, cfg.slope_max};
  j["pass"] = res.pass;
  j["first_failed"] = res.first_failed;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"convergence.csv", csv.str()});
  res.artifacts.push_back({"runs.csv", runs_csv.str()});
  res.artifacts.push_back({"convergence.json", j.dump(2) + "\n"});
  res.stdout_text = csv.str();
  res.stdout_summary = {{"pass", res.pass}, {"first_failed", res.first_failed}, {"slope", j["slope"]}};
  return res;
}

inline SuiteResult suite_bias(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  if (cfg.runs < cfg.min_bias_runs)
    throw UsageError("bias suite needs at least " + std::to_string(cfg.min_bias_runs) + " runs, got " +
                     std::to_string(cfg.runs));
  const FiniteTables t = finite_tables(model, "bias");
  const State query = parse_state(model, cfg.state);
  const double oracle = oracle_value(t, query);
  const auto batch = run_batch(model, cfg.n_particles, cfg.seed, cfg.runs, query);
  const auto est = estimates_of(batch);
  const auto rep = bias_check(est, oracle, {cfg.min_bias_runs, cfg.bias_se_multiplier});
  std::size_t extinct = 0;
  for (const auto& r : batch) extinct += r.extinct ? 1 : 0;
  res.criterion("high_bias", rep.pass);

  report::CsvTable csv({"N", "runs", "mean", "oracle", "bias", "se", "pass"});
  csv.row({std::to_string(cfg.n_particles), std::to_string(rep.runs), report::num(rep.mean), report::num(rep.oracle),
           report::num(rep.bias), report::num(rep.standard_error), rep.pass ? "1" : "0"});
  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["N"] = cfg.n_particles;
  j["runs"] = rep.runs;
  j["mean"] = rep.mean;
  j["oracle"] = rep.oracle;
  j["bias"] = rep.bias;
  j["standard_error"] = rep.standard_error;
  j["se_multiplier"] = cfg.bias_se_multiplier;
  j["extinction_rate"] = static_cast<double>(extinct) / static_cast<double>(batch.size());
  j["pass"] = res.pass;
  j["first_failed"] = res.first_failed;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"bias.csv", csv.str()});
  res.artifacts.push_back({"bias.json", j.dump(2) + "\n"});
  res.stdout_text = csv.str();
  res.stdout_summary = {{"pass", res.pass}, {"bias", rep.bias}, {"standard_error", rep.standard_error}};
  return res;
}

inline SuiteResult suite_bound(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  finite_tables(model, "bound");
  const State query = parse_state(model, cfg.state);
  const auto rep = theoretical_lp_bound(model, cfg.bound_p, cfg.n_particles, query.index());

  report::CsvTable csv({"k", "l", "q", "b", "integral", "contribution"});
  for (const auto& term : rep.terms)
    csv.row({std::to_string(rep.step), std::to_string(term.l), report::num(term.q), report::num(term.b),
             report::num(term.integral), report::num(term.contribution)});
  json h = json::array();
  for (std::size_t k = 1; k < rep.h.size(); ++k) h.push_back(vec_json(rep.h[k]));
  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["p"] = rep.p;
  j["p_prime"] = rep.p_prime;
  j["a_p"] = rep.a_p;
  j["N"] = rep.n_particles;
  j["state"] = rep.state;
  j["bound"] = rep.finite ? json(rep.bound) : json("inf");
  j["c"] = rep.finite ? json(rep.concentration_c) : json("inf");
  j["finite"] = rep.finite;
  j["diagnostic"] = rep.diagnostic;
  j["h"] = h;
  res.artifacts.push_back({"bound.csv", csv.str()});

  if (cfg.concentration) {
    if (cfg.runs < cfg.min_tail_runs)
      throw UsageError("concentration check needs at least " + std::to_string(cfg.min_tail_runs) + " runs, got " +
                       std::to_string(cfg.runs));
    const double oracle = oracle_value(tabulate(model), query);
    const auto est = estimates_of(run_batch(model, cfg.n_particles, cfg.seed, cfg.runs, query));
    const auto tail = concentration_check(est, oracle, cfg.n_particles, rep.concentration_c, cfg.eps_grid,
                                          {cfg.min_tail_runs, cfg.tail_se_multiplier});
    report::CsvTable tcsv({"epsilon", "threshold", "frequency", "bound", "se", "pass"});
    for (const auto& row : tail.rows)
      tcsv.row({report::num(row.epsilon), report::num(row.threshold), report::num(row.frequency),
                report::num(row.bound), report::num(row.standard_error), row.pass ? "1" : "0"});
    res.artifacts.push_back({"concentration.csv", tcsv.str()});
    j["concentration"] = {{"skipped", tail.skipped}, {"diagnostic", tail.diagnostic}, {"pass", tail.pass}};
    if (!tail.skipped) res.criterion("concentration_tail", tail.pass);
  }
  j["pass"] = res.pass;
  j["first_failed"] = res.first_failed;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"bound.json", j.dump(2) + "\n"});
  res.stdout_text = csv.str();
  res.stdout_summary = {{"pass", res.pass}, {"bound", j["bound"]}, {"c", j["c"]}};
  return res;
}

inline SuiteResult suite_robustness(const RunConfig& cfg, const MarkovModel& model) {
  SuiteResult res;
  const FiniteTables t = finite_tables(model, "robustness");
  const FiniteChainSpec base = to_spec(t, model);
  const auto kernel = cfg.kernel == "criteria" ? RobustnessKernel::criteria : RobustnessKernel::markov;
  Stream stream = step_stream(cfg.seed, 0, Phase::perturbation);
  report::CsvTable csv({"trial", "k", "state", "lhs", "rhs"});
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const FiniteTables approx = tabulate(make_finite_model(perturb_spec(base, stream, cfg.perturbation)));
    const auto rep = robustness_bound_check(t, approx, kernel);
    for (const auto& row : rep.rows)
      csv.row({std::to_string(trial), std::to_string(row.step), std::to_string(row.state), report::num(row.lhs),
               report::num(row.rhs)});
    worst = std::max(worst, rep.max_excess);
    res.criterion("robustness_trial_" + std::to_string(trial), rep.pass);
  }
  json j;
  j["schema_version"] = report::kSchemaVersion;
  j["trials"] = cfg.trials;
  j["kernel"] = cfg.kernel;
  j["max_excess"] = cfg.trials ? json(worst) : json(nullptr);
  j["tolerance"] = 1e-10;
  j["pass"] = res.pass;
  j["first_failed"] = res.first_failed;
  j["config"] = to_json(cfg);
  res.artifacts.push_back({"robustness.csv", csv.str()});
  res.artifacts.push_back({"robustness.json", j.dump(2) + "\n"});
  res.stdout_summary = {{"pass", res.pass}, {"max_excess", j["max_excess"]}};
  return res;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace detail

/// Loads the model and applies the --epsilon override. Validation failures
/// caused by the override are usage errors; otherwise they are model errors.
inline MarkovModel prepare_model(const RunConfig& cfg) {
  MarkovModel model = resolve_model(cfg.model);
  if (cfg.epsilon) model.epsilon.assign(model.horizon, *cfg.epsilon);
  const auto report = validate_model(model);
  if (!report.ok()) {
    if (cfg.epsilon) throw detail::UsageError("--epsilon " + std::to_string(*cfg.epsilon) + ": " + report.summary());
    throw ModelContractError("model '" + model.name + "' is invalid: " + report.summary());
  }
  return model;
}

/// Runs the selected suite and writes its artifacts plus manifest.json into cfg.out.
/// Exit codes: 0 pass, 1 criterion failed, 2 usage error, 3 model contract or I/O error.
inline int run_suite(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  json manifest;
  manifest["schema_version"] = report::kSchemaVersion;
  manifest["suite"] = cfg.suite;
  manifest["config"] = to_json(cfg);
  manifest["seed_policy"] = kSeedPolicy;
  manifest["started_at"] = detail::utc_timestamp();
  json inputs;
  inputs["model_source"] = cfg.model;
  err << "resolved config: " << manifest["config"].dump() << "\n";

  int code = kPass;
  std::string message;
  std::vector<std::string> written;
  const std::filesystem::path dir(cfg.out);
  try {
    report::ensure_directory(dir);
    inputs["model_hash"] = report::git_blob_hash(is_builtin_model(cfg.model) ? "builtin:" + cfg.model
                                                                              : report::read_file(cfg.model));
    if (!cfg.config_path.empty()) inputs["config_hash"] = report::git_blob_hash(report::read_file(cfg.config_path));

    if (!cfg.suite.empty()) {
      const MarkovModel model = prepare_model(cfg);
      SuiteResult res;
      const auto& s = cfg.suite;
      if (s == "oracle") res = detail::suite_oracle(cfg, model);
      else if (s == "simulate") res = detail::suite_simulate(cfg, model);
      else if (s == "price") res = detail::suite_price(cfg, model);
      else if (s == "convergence") res = detail::suite_convergence(cfg, model);
      else if (s == "bias") res = detail::suite_bias(cfg, model);
      else if (s == "bound") res = detail::suite_bound(cfg, model);
      else res = detail::suite_robustness(cfg, model);

      for (const auto& a : res.artifacts) {
        report::write_file(dir / a.file, a.content);
        written.push_back(a.file);
      }
      out << res.stdout_text;
      if (!res.stdout_summary.is_null()) out << res.stdout_summary.dump() << "\n";
      if (!res.pass) {
        code = kCriterionFailed;
        message = "criterion failed: " + res.first_failed;
      }
      manifest["first_failed"] = res.first_failed;
    }
  } catch (const ConfigError& e) {
    code = kUsage;
    message = e.what();
  } catch (const detail::UsageError& e) {
    code = kUsage;
    message = e.what();
  } catch (const UnsupportedModelError& e) {
    code = kUsage;
    message = e.what();
  } catch (const EnumerationTooLarge& e) {
    code = kUsage;
    message = e.what();
  } catch (const ContractError& e) {
    code = kUsage;
    message = e.what();
  } catch (const IoError& e) {
    code = kModelError;
    message = e.what();
  } catch (const ModelContractError& e) {
    code = kModelError;
    message = e.what();
  } catch (const DegenerateFlowError& e) {
    code = kModelError;
    message = e.what();
  } catch (const ExtinctionError& e) {
    code = kModelError;
    message = e.what();
  }

  manifest["inputs"] = inputs;
  manifest["artifacts"] = written;
  manifest["exit_code"] = code;
  manifest["message"] = message;
  manifest["wall_time_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (!message.empty()) err << "error: " << message << "\n";
  try {
    report::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    if (code == kPass || code == kCriterionFailed) code = kModelError;
  }
  return code;
}

/// Entry point shared by the executable and the tests.
inline int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  return run_suite(cfg, out, err);
}

}  // namespace snell::cli
