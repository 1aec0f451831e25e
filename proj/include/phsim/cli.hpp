#pragma once

// Command-line front end. dispatch() returns the process exit code:
// 0 success, 2 bad input (flags, files, values), 1 runtime failure.

#include <phsim/harness.hpp>
#include <phsim/records.hpp>
#include <phsim/scenario.hpp>
#include <phsim/session_server.hpp>
#include <phsim/units.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace phsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// "floor=1mm,weber=0.2,noise=0.1,seed=3"; omitted keys keep their defaults.
inline experiment::ObserverModel parse_observer(std::string_view spec) {
  experiment::ObserverModel m;
  if (spec.empty()) return m;
  for (auto part : units::split(spec, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("observer option '" + std::string(part) + "' needs key=value");
    const std::string_view key = part.substr(0, eq);
    const std::string_view val = part.substr(eq + 1);
    if (key == "floor")
      m.displacement_floor = units::parse_length(val);
    else if (key == "weber")
      m.weber_fraction = units::parse_number(val);
    else if (key == "noise")
      m.noise_sd = units::parse_number(val);
    else if (key == "seed")
      m.seed = static_cast<std::uint64_t>(units::parse_number(val));
    else
      throw InvalidArgument("unknown observer option '" + std::string(key) + "'");
  }
  m.validate();
  return m;
}

inline json to_json(const experiment::ObserverModel& m) {
  return {{"floor_m", m.displacement_floor}, {"weber", m.weber_fraction}, {"noise_sd", m.noise_sd}, {"seed", m.seed}};
}

/// "10..100" (10 points), "10..100:5" (step 5) or "10,20,50".
inline std::vector<double> parse_values(std::string_view spec, int points = 10) {
  const auto dots = spec.find("..");
  if (dots == std::string_view::npos) {
    std::vector<double> out;
    for (auto p : units::split(spec, ',')) out.push_back(units::parse_number(p));
    return out;
  }
  const double lo = units::parse_number(spec.substr(0, dots));
  std::string_view rest = spec.substr(dots + 2);
  std::optional<double> step;
  if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
    step = units::parse_number(rest.substr(colon + 1));
    rest = rest.substr(0, colon);
  }
  const double hi = units::parse_number(rest);
  if (!(hi >= lo)) throw InvalidArgument("range end must not be below its start");
  std::vector<double> out;
  if (step) {
    if (!(*step > 0.0)) throw InvalidArgument("range step must be positive");
    const auto n = static_cast<long>(std::floor((hi - lo) / *step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * *step);
    return out;
  }
  if (points < 2 || hi == lo) return {lo};
  for (int i = 0; i < points; ++i) out.push_back(lo + (hi - lo) * i / (points - 1));
  return out;
}

/// Applies one named parameter to a scenario; SI units.
inline void set_param(scenario::Scenario& sc, std::string_view name, double v) {
  if (name == "k") {
    sc.params.linear_stiffness = v;
  } else if (name == "kappa") {
    sc.params.torsional_stiffness = v;
  } else if (name == "clone_mass") {
    sc.params = decoupling::params_for_box(sc.params.linear_stiffness, sc.params.torsional_stiffness, v, sc.clone_side);
  } else if (name == "friction") {
    sc.friction = v;
  } else if (name == "speed") {
    sc.push.speed = v;
  } else {
    throw InvalidArgument("unknown sweep parameter '" + std::string(name) + "' (k, kappa, clone_mass, friction, speed)");
  }
  try {
    sc.validate();
  } catch (const ValidationError& e) {
    throw InvalidArgument(std::string(name) + " = " + records::fmt(v) + ": " + e.what());
  }
}

inline std::vector<double> default_masses() { return {0.015, 0.200, 0.800}; }

struct Outputs {
  fs::path dir;
  std::vector<std::string> written;

  std::string path(const std::string& name) {
    fs::create_directories(dir);
    const std::string p = (dir / name).string();
    written.push_back(p);
    return p;
  }
};

inline void finish(Outputs& out, records::Manifest m, std::ostream& os) {
  const std::string mp = out.path("manifest.json");
  m.outputs = out.written;
  records::write_json(mp, records::to_json(m));
  for (const auto& p : out.written) os << "wrote " << p << '\n';
}

// ---------------------------------------------------------------------------

inline int run_simulate(const std::string& scenario_path, const std::string& trajectory_path,
                        const std::string& trace_path, Outputs& out, std::ostream& os) {
  const scenario::Scenario sc = scenario::load_scenario(scenario_path);
  scenario::Trajectory traj;
  if (!trajectory_path.empty()) {
    traj = scenario::load_trajectory(trajectory_path);
  } else if (!sc.trajectory_path.empty()) {
    // Relative paths inside a scenario file are relative to that file.
    fs::path p = sc.trajectory_path;
    if (p.is_relative()) p = fs::path(scenario_path).parent_path() / p;
    traj = scenario::load_trajectory(p.string());
  } else {
    std::vector<std::size_t> order(sc.masses.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    traj = scenario::make_push_plan(sc, order).trajectory;
  }
  traj.validate();

  std::ofstream trace;
  if (!trace_path.empty()) {
    if (const auto parent = fs::path(trace_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    trace.open(trace_path, std::ios::binary);
    if (!trace) throw std::runtime_error("cannot write " + trace_path);
    trace << records::kTraceHeader << '\n';
    out.written.push_back(trace_path);
  }
  decoupling::Simulation sim = scenario::build_simulation(sc, traj.samples.front().pose);
  if (trace) records::write_trace_rows(trace, sim);
  std::vector<double> peaks(sc.masses.size(), 0.0);
  double max_d = 0.0;
  const auto steps = static_cast<std::uint64_t>(std::ceil(traj.duration() / sc.timestep - 1e-9));
  for (std::uint64_t i = 1; i <= steps; ++i) {
    sim.step(scenario::trajectory_sample(traj, static_cast<double>(i) * sc.timestep).pose);
    const double d = sim.link().displacement();
    max_d = std::max(max_d, d);
    for (auto id : sim.clone_contacts())
      if (id >= 1 && id <= peaks.size()) peaks[id - 1] = std::max(peaks[id - 1], d);
    if (trace) records::write_trace_rows(trace, sim);
  }
  const json summary{{"steps", steps},
                     {"duration_s", static_cast<double>(steps) * sc.timestep},
                     {"max_displacement_m", max_d},
                     {"masses_kg", scenario::arranged_masses(sc)},
                     {"peak_displacement_m", peaks}};
  records::write_json(out.path("summary.json"), summary);
  os << "simulated " << steps << " steps, max |d| = " << records::fmt(max_d) << " m\n";
  records::Manifest m;
  m.command = "simulate";
  m.config = {{"scenario", scenario::to_json(sc)}, {"scenario_file", scenario_path},
              {"trajectory", scenario::to_json(traj)}, {"trace", trace_path}};
  finish(out, m, os);
  return 0;
}

inline int run_sort(scenario::Scenario sc, const std::vector<decoupling::Condition>& conditions, int trials,
                    std::uint64_t seed, const experiment::ObserverModel& observer, unsigned workers, Outputs& out,
                    std::ostream& os) {
  if (trials < 1) throw InvalidArgument("--trials must be >= 1");
  std::vector<experiment::TrialRecord> all;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    // Each condition gets its own derived seed so adding one leaves the other unchanged.
    auto recs = experiment::run_sorting_block(sc, observer, conditions[c], trials, seed + c, workers);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  records::write_text(out.path("trials.csv"), records::trials_csv(all));
  const json report = records::sorting_report(all);
  records::write_json(out.path("report.json"), report);
  for (const auto& [name, r] : report["conditions"].items())
    os << name << ": " << r["correct"].get<int>() << "/" << r["trials"].get<int>() << " correct, "
       << r["dont_know"].get<int>() << " don't know\n";
  json conds = json::array();
  for (auto c : conditions) conds.push_back(std::string(decoupling::to_string(c)));
  records::Manifest m;
  m.command = "sort";
  m.seed = seed;
  m.config = {{"scenario", scenario::to_json(sc)}, {"conditions", conds}, {"trials", trials},
              {"observer", to_json(observer)}};
  finish(out, m, os);
  return 0;
}

inline int run_staircase(const scenario::Scenario& sc, const std::vector<double>& references, std::uint64_t seed,
                         const experiment::ObserverModel& observer, Outputs& out, std::ostream& os) {
  const auto run = experiment::run_interleaved_staircases(experiment::default_configs(references), sc, observer, seed);
  records::write_text(out.path("trials.csv"), records::trials_csv(run.trials));
  records::write_json(out.path("report.json"), records::staircase_report(run));
  for (const auto& r : run.results)
    os << "reference " << records::fmt(r.reference_mass * 1000.0) << " g: JND " << records::fmt(r.jnd * 1000.0)
       << " g\n";
  records::Manifest m;
  m.command = "staircase";
  m.seed = seed;
  m.config = {{"scenario", scenario::to_json(sc)}, {"references_kg", references}, {"observer", to_json(observer)}};
  finish(out, m, os);
  return 0;
}

inline int run_sweep(const scenario::Scenario& base, const std::string& param, const std::vector<double>& values,
                     const std::string& metric, unsigned workers, Outputs& out, std::ostream& os) {
  if (metric != "peak-displacement") throw InvalidArgument("unknown metric '" + metric + "' (peak-displacement)");
  if (values.empty()) throw InvalidArgument("--values is empty");
  std::vector<scenario::Scenario> scs;
  for (double v : values) {
    scenario::Scenario sc = base;
    set_param(sc, param, v);
    scs.push_back(sc);
  }
  const auto runs = experiment::parallel_map(
      scs.size(),
      [&](std::size_t i) {
        std::vector<std::size_t> order(scs[i].masses.size());
        for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
        return experiment::run_pushes(scs[i], order);
      },
      workers);
  std::vector<records::SweepRow> rows;
  for (std::size_t i = 0; i < scs.size(); ++i) {
    const auto masses = scenario::arranged_masses(scs[i]);
    for (std::size_t s = 0; s < masses.size(); ++s)
      rows.push_back({param, values[i], s, masses[s], runs[i].peak_displacement[s]});
  }
  {
    std::ofstream f(out.path("sweep.csv"), std::ios::binary);
    records::write_sweep_csv(f, rows);
  }
  os << "swept " << param << " over " << values.size() << " values\n";
  records::Manifest m;
  m.command = "sweep";
  m.config = {{"scenario", scenario::to_json(base)}, {"param", param}, {"values", values}, {"metric", metric}};
  finish(out, m, os);
  return 0;
}

inline std::pair<std::string, unsigned short> parse_listen(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--listen expects HOST:PORT");
  const std::string host = addr.substr(0, colon);
  const double port = units::parse_number(addr.substr(colon + 1));
  if (!(port >= 0 && port <= 65535) || port != std::floor(port)) throw InvalidArgument("port out of range");
  boost::system::error_code ec;
  boost::asio::ip::make_address(host.empty() ? "0.0.0.0" : host, ec);
  if (ec) throw InvalidArgument("bad listen address '" + host + "'");
  return {host.empty() ? "0.0.0.0" : host, static_cast<unsigned short>(port)};
}

inline int run_serve(session::ServerConfig cfg, double duration, std::ostream& os) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by the server threads
  session::SessionServer server(cfg);
  const auto port = server.start();
  os << "listening on " << cfg.address << ':' << port << " (WebSocket at /ws)" << std::endl;
  if (duration > 0.0) {
    timespec ts{static_cast<time_t>(duration), static_cast<long>((duration - std::floor(duration)) * 1e9)};
    sigtimedwait(&set, nullptr, &ts);
  } else {
    int sig = 0;
    sigwait(&set, &sig);
  }
  server.stop();
  for (const auto& f : server.result_files()) os << "wrote " << f << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

inline int dispatch(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"Pseudo-haptic weight simulation: decoupled effector physics and automated perception experiments",
               "phsim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(records::kVersion));

  std::string out_dir = "phsim-out";
  std::string scenario_path;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  const auto common = [&](CLI::App* sub, bool with_scenario) {
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    if (with_scenario) sub->add_option("--scenario", scenario_path, "Scenario JSON (overrides the built-in defaults)");
  };

  auto* sim = app.add_subcommand("simulate", "Run a scenario against an effector trajectory");
  std::string trajectory_path, trace_path;
  sim->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  sim->add_option("--trajectory", trajectory_path, "Trajectory JSON (default: the scenario's, else a push of every cube)");
  sim->add_option("--trace", trace_path, "Write one CSV row per body per step");
  sim->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* sort = app.add_subcommand("sort", "Automated weight-sorting trials with the synthetic observer");
  std::string condition_s = "C2", masses_s = "15g,200g,800g", observer_s;
  int trials = 10;
  std::uint64_t seed = 1;
  sort->add_option("--condition", condition_s, "C1, C2 or C1,C2")->capture_default_str();
  sort->add_option("--masses", masses_s, "Cube masses with units (g or kg)")->capture_default_str();
  sort->add_option("--trials", trials, "Trials per condition")->capture_default_str();
  sort->add_option("--seed", seed, "RNG seed")->capture_default_str();
  sort->add_option("--observer", observer_s, "floor=1mm,weber=0.2[,noise=0.1][,seed=N]");
  sort->add_option("--workers", workers, "Parallel trial workers");
  common(sort, true);

  auto* stair = app.add_subcommand("staircase", "Interleaved adaptive staircases measuring the JND");
  std::string refs_s = "15g,200g,800g", stair_condition = "C2";
  stair->add_option("--references", refs_s, "Reference masses with units")->capture_default_str();
  stair->add_option("--observer", observer_s, "floor=1mm,weber=0.2[,noise=0.1][,seed=N]");
  stair->add_option("--seed", seed, "RNG seed")->capture_default_str();
  stair->add_option("--condition", stair_condition, "C1 or C2")->capture_default_str();
  common(stair, true);

  auto* sweep = app.add_subcommand("sweep", "Vary one parameter and measure peak displacement per cube");
  std::string param = "k", values_s, metric = "peak-displacement";
  int points = 10;
  sweep->add_option("--param", param, "k, kappa, clone_mass, friction or speed (SI units)")->capture_default_str();
  sweep->add_option("--values", values_s, "A..B, A..B:STEP or a comma list")->required();
  sweep->add_option("--points", points, "Points for an A..B range")->capture_default_str();
  sweep->add_option("--metric", metric, "peak-displacement")->capture_default_str();
  sweep->add_option("--masses", masses_s, "Cube masses with units")->capture_default_str();
  sweep->add_option("--workers", workers, "Parallel workers");
  common(sweep, true);

  auto* serve = app.add_subcommand("serve", "Live session service (WebSocket + static files)");
  std::string listen = "127.0.0.1:8080", static_root, results_dir = "phsim-sessions";
  double stream_rate = 60.0, smoothing = 0.0, duration = 0.0;
  serve->add_option("--listen", listen, "HOST:PORT")->capture_default_str();
  serve->add_option("--static", static_root, "Directory of client files served over HTTP");
  serve->add_option("--results", results_dir, "Where per-session result CSVs go")->capture_default_str();
  serve->add_option("--stream-rate", stream_rate, "world-state messages per second")->capture_default_str();
  serve->add_option("--smoothing", smoothing, "Pose filter time constant in seconds (0 = off)")->capture_default_str();
  serve->add_option("--seed", seed, "Arrangement seed")->capture_default_str();
  serve->add_option("--duration", duration, "Stop after this many seconds (0 = until SIGINT)");
  serve->add_option("--scenario", scenario_path, "Scenario JSON for the session world");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, es);
    return code == 0 ? 0 : 2;
  }

  try {
    // --masses wins when given; otherwise the scenario file's masses, else the default set.
    const auto base_scenario = [&](CLI::App* sub) {
      scenario::Scenario sc = scenario_path.empty() ? scenario::Scenario{} : scenario::load_scenario(scenario_path);
      if (const auto* o = sub->get_option_no_throw("--masses"); o && o->count() > 0)
        sc.masses = units::parse_mass_list(masses_s);
      else if (scenario_path.empty())
        sc.masses = default_masses();
      sc.validate();
      return sc;
    };
    Outputs out{out_dir, {}};
    if (*sim) return run_simulate(scenario_path, trajectory_path, trace_path, out, os);
    if (*sort) {
      std::vector<decoupling::Condition> conds;
      for (auto c : units::split(condition_s, ',')) conds.push_back(decoupling::parse_condition(c));
      return run_sort(base_scenario(sort), conds, trials, seed, parse_observer(observer_s),
                      workers, out, os);
    }
    if (*stair) {
      scenario::Scenario sc = base_scenario(stair);
      sc.condition = decoupling::parse_condition(stair_condition);
      return run_staircase(sc, units::parse_mass_list(refs_s), seed, parse_observer(observer_s), out, os);
    }
    if (*sweep)
      return run_sweep(base_scenario(sweep), param, parse_values(values_s, points), metric,
                       workers, out, os);
    if (*serve) {
      session::ServerConfig cfg;
      std::tie(cfg.address, cfg.port) = parse_listen(listen);
      cfg.static_root = static_root;
      cfg.results_dir = results_dir;
      if (!scenario_path.empty()) cfg.session.base = scenario::load_scenario(scenario_path);
      cfg.session.stream_rate = stream_rate;
      cfg.session.smoothing_tau = smoothing;
      cfg.session.seed = seed;
      if (!(stream_rate > 0.0)) throw InvalidArgument("--stream-rate must be positive");
      if (!(smoothing >= 0.0)) throw InvalidArgument("--smoothing must be >= 0");
      if (!static_root.empty() && !fs::is_directory(static_root))
        throw InvalidArgument("--static: no such directory " + static_root);
      return run_serve(cfg, duration, os);
    }
  } catch (const InvalidArgument& e) {
    es << "error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    es << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    es << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace phsim::cli
