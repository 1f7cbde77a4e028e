// Experiment driver: builds models from config files and runs the simulator,
// the value-iteration solver, the dual search, the penalized backward solver,
// and the consolidated cross-check / tracking demos. Outputs are deterministic
// functions of (config, seed).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pdmp/bsde.hpp"
#include "pdmp/config.hpp"
#include "pdmp/hodgkin_huxley.hpp"
#include "pdmp/io.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/randomization.hpp"
#include "pdmp/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdmp;

namespace {

constexpr const char* kVersion = "pdmpctl 0.1.0";

struct CliArgs {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 1;
  int paths = 0;  // 0 = take from config
  int jobs = 1;   // accepted for interface stability; execution is sequential
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelBundle {
  PdmpModel model;
  bool is_hh = false;
  hh::HHParams hh_params;
  int start_mode = 0;
};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return out;
}

ModelBundle model_from_config(const Config& cfg) {
  const std::string kind = cfg.get_str("model.kind", "toy");
  ModelBundle mb;
  if (kind == "toy") {
    ToyParams p;
    p.mode_rates = cfg.get_list("toy.rates", {0.5, 0.3});
    p.mode_costs = cfg.get_list("toy.costs", {1.0, 0.2});
    p.terminal_costs = cfg.get_list("toy.terminal", {});
    p.control_cost = cfg.get_double("toy.control_cost", 0.3);
    p.rate_control_slope = cfg.get_double("toy.rate_control_slope", 0.0);
    p.rate_time_slope = cfg.get_double("toy.rate_time_slope", 0.0);
    p.controls = cfg.get_list("toy.controls", {0.0, 1.0});
    p.horizon = cfg.get_double("toy.horizon", 1.0);
    mb.model = make_toy(p);
    mb.start_mode = cfg.get_int("simulate.start_mode", 0);
  } else if (kind == "hh") {
    mb.is_hh = true;
    mb.hh_params = hh::params_from_config(cfg);
    auto model_ptr = std::make_shared<const hh::HHModel>(mb.hh_params);
    mb.model = hh::build_model(model_ptr);
    if (cfg.has("simulate.start_mode")) {
      mb.start_mode = cfg.get_int("simulate.start_mode");
    } else {
      // Default: every site in its closed resting state.
      std::vector<hh::ChannelState> rest;
      for (hh::Family f : mb.hh_params.site_families) {
        switch (f) {
          case hh::Family::K: rest.push_back(hh::ChannelState::n0); break;
          case hh::Family::Na: rest.push_back(hh::ChannelState::m0h1); break;
          case hh::Family::ChR2: rest.push_back(hh::ChannelState::C1); break;
        }
      }
      mb.start_mode = model_ptr->codec().encode(rest);
    }
  } else {
    throw ConfigError("config: field 'model.kind' must be toy|hh, got '" + kind + "'");
  }
  if (mb.start_mode < 0 || mb.start_mode >= mb.model.mode_count)
    throw ConfigError("config: field 'simulate.start_mode' out of range");
  return mb;
}

Lambda0 lambda0_from_config(const Config& cfg, const PdmpModel& model) {
  const double mass = cfg.get_double("dual.lambda0_mass", 1.0);
  if (mass <= 0.0) throw ConfigError("config: field 'dual.lambda0_mass' must be positive");
  return Lambda0::uniform(static_cast<int>(model.control_grid.size()), mass);
}

NuFamily family_from_config(const Config& cfg, const PdmpModel& model) {
  const double nu_min = cfg.get_double("dual.nu_min", 0.01);
  const double nu_max = cfg.get_double("dual.nu_max", 10.0);
  if (!(nu_min > 0.0 && nu_min <= nu_max))
    throw ConfigError("config: fields 'dual.nu_min'/'dual.nu_max' must satisfy 0 < min <= max");
  return NuFamily::per_control_log(model.control_grid, nu_min, nu_max);
}

LatticeSpec lattice_from_config(const Config& cfg, const PdmpModel& model, double dt_hint) {
  const int tp = cfg.get_int("value.time_points",
                             std::max(2, static_cast<int>(model.horizon / dt_hint) + 1));
  auto times = linspace(0.0, model.horizon, tp);
  const int dims = cfg.get_int("value.feature_dims", 0);
  if (dims == 0) return LatticeSpec::mode_only(times);
  const int fp = cfg.get_int("value.feature_points", 5);
  const double lo = cfg.get_double("value.feature_min", -1.0);
  const double hi = cfg.get_double("value.feature_max", 1.0);
  if (fp < 2 || hi <= lo) throw ConfigError("config: bad [value] feature axis fields");
  std::vector<std::vector<double>> axes(dims, linspace(lo, hi, fp));
  return LatticeSpec::leading_modes(times, axes, model.field_modes);
}

io::RunManifest start_manifest(const std::string& cmd, const Config& cfg, const CliArgs& args) {
  io::RunManifest m;
  m.command = cmd;
  m.config_origin = cfg.origin();
  m.config_hash = cfg.content_hash();
  m.seed = args.seed;
  m.version = kVersion;
  return m;
}

/// Trajectory resampled on a uniform grid; linear in the recorded samples.
std::vector<std::pair<double, SpectralField>> resample(const Trajectory& traj, double dt) {
  std::vector<std::pair<double, SpectralField>> out;
  for (double t = traj.t_start; t <= traj.t_end + 1e-12; t += dt) {
    const double tc = std::min(t, traj.t_end);
    const TrajectorySegment* seg = &traj.segments.back();
    for (const auto& s : traj.segments)
      if (tc <= s.times.back() + 1e-12) {
        seg = &s;
        break;
      }
    SpectralField f = seg->fields.back();
    for (std::size_t j = 0; j + 1 < seg->times.size(); ++j)
      if (tc <= seg->times[j + 1] + 1e-12) {
        const double h = seg->times[j + 1] - seg->times[j];
        const double w = h > 0.0 ? std::clamp((tc - seg->times[j]) / h, 0.0, 1.0) : 0.0;
        f = (1.0 - w) * seg->fields[j] + w * seg->fields[j + 1];
        break;
      }
    out.emplace_back(tc, std::move(f));
  }
  return out;
}

int cmd_simulate(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("simulate", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  const int n_paths = args.paths > 0 ? args.paths : cfg.get_int("simulate.paths", 4);
  const double a = cfg.get_double("simulate.control", 0.0);
  SimOptions opts;
  opts.sample_step = cfg.get_double("simulate.sample_step", 0.01);
  const auto policy = OpenLoopPolicy::constant(a);
  const SpectralField x0 = mb.model.zero_field();

  json summary;
  summary["schema"] = "simulate_summary/1";
  summary["paths"] = n_paths;
  json per_path = json::array();
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(args.seed, "cli_sim", i));
    const Trajectory traj = simulate(mb.model, 0.0, x0, mb.start_mode, policy, rng, opts);
    const std::string name = "trajectory_" + std::to_string(i) + ".csv";
    io::write_trajectory_csv((fs::path(args.out) / name).string(), mb.model, traj,
                             cfg.get_int("simulate.z_samples", 21));
    manifest.outputs.push_back(name);
    per_path.push_back({{"cost", path_cost(mb.model, traj)},
                        {"jumps", traj.jump_times.size()},
                        {"terminal_mode", traj.terminal.mode}});
  }
  summary["per_path"] = per_path;
  {
    std::ofstream out(fs::path(args.out) / "simulate_summary.json", std::ios::binary);
    out << summary.dump(2) << "\n";
  }
  manifest.outputs.push_back("simulate_summary.json");
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_simulate.json").string(), manifest);
  return 0;
}

SolveResult run_value(const Config& cfg, const ModelBundle& mb) {
  const auto lattice = lattice_from_config(cfg, mb.model, 0.05);
  return solve(mb.model, lattice, cfg.get_double("value.tol", 1e-6),
               cfg.get_int("value.max_iter", 60), cfg.get_int("value.substeps", 64));
}

int cmd_value(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("value", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult res = run_value(cfg, mb);
  io::write_value_grid((fs::path(args.out) / "value_grid.csv").string(),
                       (fs::path(args.out) / "value_grid.json").string(), res.grid,
                       res.residuals, mb.model.field_modes);
  manifest.outputs = {"value_grid.csv", "value_grid.json"};
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_value.json").string(), manifest);
  if (!res.converged) {
    std::cerr << "value iteration did not reach tolerance in " << res.iterations
              << " iterations\n";
    return 3;
  }
  return 0;
}

int cmd_dual(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("dual", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  const int n_paths = args.paths > 0 ? args.paths : cfg.get_int("dual.paths", 200);
  const int budget = cfg.get_int("dual.budget", 60);
  const auto lambda0 = lambda0_from_config(cfg, mb.model);
  const auto family = family_from_config(cfg, mb.model);
  const double a = cfg.get_double("dual.start_control", mb.model.control_grid.front());
  const auto res =
      minimize_over_nu(mb.model, lambda0, family, 0.0, mb.model.zero_field(), mb.start_mode, a,
                       n_paths, budget, derive_seed(args.seed, "cli_dual", 0));
  io::write_nu_trace_csv((fs::path(args.out) / "dual_trace.csv").string(), res);
  json j;
  j["schema"] = "dual_result/1";
  j["value_mean"] = res.value.mean;
  j["value_stderr"] = res.value.se;
  j["evaluations"] = res.evaluations;
  j["budget_exhausted"] = res.budget_exhausted;
  j["theta"] = std::vector<double>(res.theta.data(), res.theta.data() + res.theta.size());
  {
    std::ofstream out(fs::path(args.out) / "dual_result.json", std::ios::binary);
    out << j.dump(2) << "\n";
  }
  manifest.outputs = {"dual_trace.csv", "dual_result.json"};
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_dual.json").string(), manifest);
  return 0;
}

std::vector<int> ladder_from_config(const Config& cfg) {
  std::vector<int> ladder;
  for (double v : cfg.get_list("bsde.ladder", {1, 2, 5, 10, 50})) ladder.push_back(static_cast<int>(v));
  return ladder;
}

int cmd_bsde(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("bsde", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  const auto lambda0 = lambda0_from_config(cfg, mb.model);
  const auto lattice = lattice_from_config(cfg, mb.model, 0.05);
  PenalizedScheme scheme;
  scheme.dt = cfg.get_double("bsde.dt", 0.005);
  json j;
  j["schema"] = "bsde_result/1";
  json per_n = json::array();
  for (int n : ladder_from_config(cfg)) {
    scheme.n_penalty = n;
    const auto sol = solve_penalized_grid(mb.model, lambda0, scheme, lattice, 0.0);
    const std::string name = "penalized_n" + std::to_string(n) + ".csv";
    io::write_penalized_csv((fs::path(args.out) / name).string(), sol, mb.model);
    manifest.outputs.push_back(name);
    per_n.push_back({{"n", n},
                     {"constraint_violation", constraint_violation(sol)},
                     {"penalty_mass", sol.penalty_mass},
                     {"dt", sol.dt}});
  }
  j["per_n"] = per_n;
  {
    std::ofstream out(fs::path(args.out) / "bsde_result.json", std::ios::binary);
    out << j.dump(2) << "\n";
  }
  manifest.outputs.push_back("bsde_result.json");
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_bsde.json").string(), manifest);
  return 0;
}

int cmd_crosscheck(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("crosscheck", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  if (mb.model.field_modes != 0)
    throw ConfigError("config: crosscheck needs a mode-only (toy) model");

  json report;
  report["schema"] = "crosscheck_report/1";
  bool all_pass = true;
  auto flag = [&](const char* name, bool ok, json detail) {
    detail["pass"] = ok;
    report[name] = detail;
    all_pass = all_pass && ok;
  };

  // Primal vs brute force.
  const SolveResult primal = run_value(cfg, mb);
  const int cap = cfg.get_int("crosscheck.jump_cap", 4);
  const auto brute = brute_force_value(mb.model, primal.grid.spec().times, cap,
                                       cfg.get_int("value.substeps", 64));
  const double primal_tol = cfg.get_double("crosscheck.primal_tol", 1e-3);
  const double sup_pb = primal.grid.max_abs_diff(brute.grid);
  flag("primal_vs_brute", primal.converged && sup_pb <= primal_tol,
       {{"sup_error", sup_pb},
        {"tolerance", primal_tol},
        {"truncation_bound", brute.truncation_bound},
        {"iterations", primal.iterations}});

  const double v_ref = primal.grid.value(0.0, mb.model.zero_field(), mb.start_mode);

  // Dual upper bound.
  const auto lambda0 = lambda0_from_config(cfg, mb.model);
  const auto family = family_from_config(cfg, mb.model);
  const int dual_paths = args.paths > 0 ? args.paths : cfg.get_int("dual.paths", 400);
  const auto dual = minimize_over_nu(mb.model, lambda0, family, 0.0, mb.model.zero_field(),
                                     mb.start_mode, mb.model.control_grid.front(), dual_paths,
                                     cfg.get_int("dual.budget", 60),
                                     derive_seed(args.seed, "cli_dual", 0));
  const bool dual_ok = dual.value.mean >= v_ref - 3.0 * dual.value.se;
  flag("dual_upper_bound", dual_ok,
       {{"dual_mean", dual.value.mean},
        {"dual_stderr", dual.value.se},
        {"primal_value", v_ref},
        {"gap", dual.value.mean - v_ref}});

  // Penalization ladder and Feynman-Kac agreement.
  PenalizedScheme scheme;
  scheme.dt = cfg.get_double("bsde.dt", 0.005);
  const auto lattice = lattice_from_config(cfg, mb.model, 0.05);
  const double mono_tol = cfg.get_double("crosscheck.monotone_tol", 1e-3);
  const double sup_tol = cfg.get_double("crosscheck.bsde_sup_tol", 5e-2);
  const double spread_tol = cfg.get_double("crosscheck.bsde_spread_tol", 2e-2);
  bool monotone = true;
  double worst_increase = 0.0;
  PrimalComparison cmp;
  std::vector<PenalizedSolution> sols;
  for (int n : ladder_from_config(cfg)) {
    scheme.n_penalty = n;
    sols.push_back(solve_penalized_grid(mb.model, lambda0, scheme, lattice, 0.0));
    if (sols.size() > 1) {
      const auto& prev = sols[sols.size() - 2];
      const auto& cur = sols.back();
      for (std::size_t a = 0; a < cur.values.size(); ++a) {
        const double inc = [&] {
          double worst = 0.0;
          for (int ti = 0; ti < cur.values[a].time_points(); ++ti)
            for (int m = 0; m < cur.values[a].mode_count(); ++m)
              worst = std::max(worst, cur.values[a].at(ti, 0, m) - prev.values[a].at(ti, 0, m));
          return worst;
        }();
        worst_increase = std::max(worst_increase, inc);
      }
      monotone = monotone && worst_increase <= mono_tol;
    }
  }
  flag("bsde_monotone_in_n", monotone,
       {{"worst_increase", worst_increase}, {"tolerance", mono_tol}});
  cmp = compare_to_primal(sols.back(), primal.grid);
  flag("bsde_vs_primal", cmp.sup_err <= sup_tol && cmp.control_spread <= spread_tol,
       {{"sup_error", cmp.sup_err},
        {"mean_error", cmp.mean_err},
        {"control_spread", cmp.control_spread},
        {"sup_tolerance", sup_tol},
        {"spread_tolerance", spread_tol}});

  report["pass"] = all_pass;
  {
    std::ofstream out(fs::path(args.out) / "crosscheck_report.json", std::ios::binary);
    out << report.dump(2) << "\n";
  }
  manifest.outputs = {"crosscheck_report.json"};
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_crosscheck.json").string(), manifest);
  std::cout << (all_pass ? "crosscheck: PASS" : "crosscheck: FAIL") << "\n";
  return 0;
}

int cmd_track(const Config& cfg, const CliArgs& args, ModelBundle mb) {
  auto manifest = start_manifest("track", cfg, args);
  const auto t0 = std::chrono::steady_clock::now();
  if (!mb.is_hh) throw ConfigError("config: track needs model.kind = hh");
  const int n_paths = args.paths > 0 ? args.paths : cfg.get_int("track.paths", 100);
  const SpectralField x0 = mb.model.zero_field();
  SimOptions opts;
  opts.sample_step = cfg.get_double("simulate.sample_step", 0.01);

  const double a_max = mb.hh_params.a_max;
  const auto cost_off = estimate_cost(mb.model, 0.0, x0, mb.start_mode,
                                      OpenLoopPolicy::constant(0.0), n_paths,
                                      derive_seed(args.seed, "track_off", 0), opts);
  const auto cost_on = estimate_cost(mb.model, 0.0, x0, mb.start_mode,
                                     OpenLoopPolicy::constant(a_max), n_paths,
                                     derive_seed(args.seed, "track_on", 0), opts);
  const auto lambda0 = lambda0_from_config(cfg, mb.model);
  const auto family = family_from_config(cfg, mb.model);
  const auto dual = minimize_over_nu(mb.model, lambda0, family, 0.0, x0, mb.start_mode, 0.0,
                                     cfg.get_int("dual.paths", n_paths),
                                     cfg.get_int("dual.budget", 40),
                                     derive_seed(args.seed, "track_nu", 0), opts);

  {
    std::ofstream out(fs::path(args.out) / "track_costs.csv", std::ios::binary);
    out << "policy,mean,stderr\n";
    out << "a_zero," << io::fmt(cost_off.mean) << ',' << io::fmt(cost_off.se) << "\n";
    out << "a_max," << io::fmt(cost_on.mean) << ',' << io::fmt(cost_on.se) << "\n";
    out << "nu_optimized," << io::fmt(dual.value.mean) << ',' << io::fmt(dual.value.se) << "\n";
  }

  // Tracking-error time series along one representative path per constant policy.
  const double dt = cfg.get_double("track.series_step", 0.05);
  Rng rng_off(derive_seed(args.seed, "track_series", 0));
  Rng rng_on(derive_seed(args.seed, "track_series", 1));
  const auto path_off =
      resample(simulate(mb.model, 0.0, x0, mb.start_mode, OpenLoopPolicy::constant(0.0), rng_off,
                        opts), dt);
  const auto path_on =
      resample(simulate(mb.model, 0.0, x0, mb.start_mode, OpenLoopPolicy::constant(a_max), rng_on,
                        opts), dt);
  {
    std::ofstream out(fs::path(args.out) / "track_timeseries.csv", std::ios::binary);
    out << "t,err_a_zero,err_a_max\n";
    for (std::size_t i = 0; i < path_off.size() && i < path_on.size(); ++i) {
      auto err = [&](const SpectralField& v) {
        SpectralField d = v;
        d -= mb.hh_params.v_ref;
        const double r = norm(d, NormKind::L2);
        return r * r;
      };
      out << io::fmt(path_off[i].first) << ',' << io::fmt(err(path_off[i].second)) << ','
          << io::fmt(err(path_on[i].second)) << "\n";
    }
  }
  io::write_nu_trace_csv((fs::path(args.out) / "track_nu_trace.csv").string(), dual);
  manifest.outputs = {"track_costs.csv", "track_timeseries.csv", "track_nu_trace.csv"};
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_manifest((fs::path(args.out) / "manifest_track.json").string(), manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDMP simulation and optimal-control toolkit"};
  app.set_version_flag("--version", kVersion);
  CliArgs args;
  std::string command;
  for (const char* name : {"simulate", "value", "dual", "bsde", "crosscheck", "track"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config, "Config file path")->required();
    sub->add_option("--seed", args.seed, "Root RNG seed");
    sub->add_option("--out", args.out, "Output directory (must exist)");
    sub->add_option("--paths", args.paths, "Monte Carlo path count override");
    sub->add_option("--jobs", args.jobs, "Worker hint (execution is sequential)");
    sub->callback([&command, name] { command = name; });
  }
  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);

  Config cfg;
  ModelBundle mb;
  try {
    if (!fs::is_directory(args.out)) throw ConfigError("output directory does not exist: " + args.out);
    cfg = Config::parse_file(args.config);
    mb = model_from_config(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    if (command == "simulate") return cmd_simulate(cfg, args, std::move(mb));
    if (command == "value") return cmd_value(cfg, args, std::move(mb));
    if (command == "dual") return cmd_dual(cfg, args, std::move(mb));
    if (command == "bsde") return cmd_bsde(cfg, args, std::move(mb));
    if (command == "crosscheck") return cmd_crosscheck(cfg, args, std::move(mb));
    if (command == "track") return cmd_track(cfg, args, std::move(mb));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
