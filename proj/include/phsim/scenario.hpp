#pragma once

// Scenario files (cube layout, spring parameters, condition) and effector
// trajectories. File units are SI: kg, m, s, rad. JSON schema: docs/formats.md.

#include <phsim/body.hpp>
#include <phsim/decoupling.hpp>
#include <phsim/errors.hpp>
#include <phsim/math.hpp>
#include <phsim/world.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace phsim::scenario {

using decoupling::Condition;
using decoupling::IntegrationMode;

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }

  void validate() const {
    if (samples.empty()) throw ValidationError("trajectory has no samples");
    if (samples.front().t != 0.0) throw ValidationError("trajectory must start at t = 0");
    for (std::size_t i = 1; i < samples.size(); ++i)
      if (!(samples[i].t > samples[i - 1].t))
        throw ValidationError("trajectory times must be strictly increasing (sample " +
                              std::to_string(i) + ")");
  }

  /// Appends a sample `duration` seconds after the last one.
  void append(double duration, const Pose& pose) {
    samples.push_back({samples.empty() ? 0.0 : samples.back().t + duration, pose});
  }
};

struct TrajectoryPoint {
  Pose pose;
  Vec3 velocity;
};

/// Piecewise-linear position, slerped orientation. Past the end the last pose
/// is held with zero velocity.
inline TrajectoryPoint trajectory_sample(const Trajectory& traj, double t) {
  if (t < 0.0) throw InvalidArgument("trajectory_sample: t must be >= 0");
  if (traj.samples.empty()) throw InvalidArgument("trajectory_sample: empty trajectory");
  const auto& s = traj.samples;
  if (t >= s.back().t) return {s.back().pose, {}};
  // first sample with time > t
  const auto it = std::upper_bound(s.begin(), s.end(), t,
                                   [](double v, const TrajectorySample& x) { return v < x.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double span = b.t - a.t;
  const double u = (t - a.t) / span;
  const Vec3 vel = (b.pose.position - a.pose.position) / span;
  if (u == 0.0) return {a.pose, vel};
  return {{a.pose.position + (b.pose.position - a.pose.position) * u,
           slerp(a.pose.orientation, b.pose.orientation, u)},
          vel};
}

// ---------------------------------------------------------------------------
// Scenario

struct PushSettings {
  double speed = 0.02;          // [m/s] real effector speed while pushing
  double distance = 0.30;       // [m] travel past first contact
  double approach_gap = 0.02;   // [m] free space before the cube face
  double transit_speed = 0.10;  // [m/s] retreat / move between cubes
  double hover = 0.001;         // [m] effector bottom above the ground

  void validate() const {
    if (!(speed > 0.0)) throw ValidationError("push speed must be positive");
    if (!(distance > 0.0)) throw ValidationError("push distance must be positive");
    if (!(approach_gap >= 0.0)) throw ValidationError("approach gap must be >= 0");
    if (!(transit_speed > 0.0)) throw ValidationError("transit speed must be positive");
    if (!(hover >= 0.0)) throw ValidationError("hover must be >= 0");
  }
  bool operator==(const PushSettings&) const = default;
};

struct Scenario {
  std::vector<double> masses;      // [kg], in listed order before shuffling
  double cube_side = 0.035;        // [m]
  double cube_spacing = 0.10;      // [m] between neighbouring cube centres
  std::uint64_t arrangement_seed = 0;
  bool shuffle = false;            // randomize slot order with arrangement_seed

  decoupling::DecouplingParams params;  // k, kappa, clone mass/inertia
  double clone_side = 0.035;            // [m]
  double friction = 0.8;
  double restitution = 0.0;
  Condition condition = Condition::Decoupled;
  IntegrationMode integration = IntegrationMode::Exact;
  bool clone_gravity = false;
  Vec3 gravity{0.0, 0.0, -9.81};
  double timestep = rigid::kDefaultTimestep;
  rigid::SolverParams solver;
  PushSettings push;
  std::string trajectory_path;  // empty: generated push trajectory

  void validate() const {
    if (masses.empty()) throw ValidationError("scenario needs at least one cube mass");
    for (double m : masses)
      if (!(m > 0.0)) throw ValidationError("mass must be positive");
    if (!(cube_side > 0.0)) throw ValidationError("cube side must be positive");
    if (!(clone_side > 0.0)) throw ValidationError("clone side must be positive");
    if (!(cube_spacing > cube_side)) throw ValidationError("cube spacing must exceed the cube side");
    if (!(friction >= 0.0)) throw ValidationError("friction must be >= 0");
    if (!(restitution >= 0.0 && restitution <= 1.0)) throw ValidationError("restitution must lie in [0, 1]");
    if (!(timestep > 0.0)) throw ValidationError("timestep must be positive");
    if (solver.velocity_iterations < 1) throw ValidationError("solver iterations must be >= 1");
    try {
      params.validate();
    } catch (const InvalidArgument& e) {
      throw ValidationError(e.what());
    }
    push.validate();
  }

  bool operator==(const Scenario&) const = default;
};

/// Mass of each slot, left to right, after the seeded shuffle.
inline std::vector<double> arranged_masses(const Scenario& sc) {
  std::vector<double> out = sc.masses;
  if (!sc.shuffle) return out;
  std::mt19937_64 rng(sc.arrangement_seed);
  for (std::size_t i = out.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

inline double slot_x(const Scenario& sc, std::size_t slot) {
  const double n = static_cast<double>(sc.masses.size());
  return (static_cast<double>(slot) - 0.5 * (n - 1.0)) * sc.cube_spacing;
}

inline constexpr rigid::BodyId kCloneId = 100;

/// Cube bodies get ids 1..n in slot order.
inline rigid::BodyId cube_id(std::size_t slot) { return static_cast<rigid::BodyId>(slot + 1); }

// ---------------------------------------------------------------------------
// Push trajectories

struct PushWindow {
  rigid::BodyId cube = 0;
  double t_begin = 0.0;  // approach starts
  double t_contact = 0.0;
  double t_end = 0.0;    // push finished
};

struct PushPlan {
  Trajectory trajectory;
  std::vector<PushWindow> windows;
};

inline Pose effector_start_pose(const Scenario& sc, std::size_t slot) {
  const double half_cube = 0.5 * sc.cube_side;
  const double half_eff = 0.5 * sc.clone_side;
  return {{slot_x(sc, slot), -(half_cube + sc.push.approach_gap + half_eff), half_eff + sc.push.hover},
          UnitQuaternion::identity()};
}

/// Constant-velocity pushes along +y against the given slots in order:
/// approach, push `distance` past contact, retreat, move to the next start.
inline PushPlan make_push_plan(const Scenario& sc, const std::vector<std::size_t>& slot_order) {
  sc.push.validate();
  PushPlan plan;
  const PushSettings& p = sc.push;
  Pose cur = effector_start_pose(sc, slot_order.empty() ? 0 : slot_order.front());
  plan.trajectory.samples.push_back({0.0, cur});
  for (std::size_t k = 0; k < slot_order.size(); ++k) {
    const std::size_t slot = slot_order[k];
    const Pose start = effector_start_pose(sc, slot);
    const double transit = (start.position - cur.position).norm();
    if (transit > 0.0) plan.trajectory.append(transit / p.transit_speed, start);
    PushWindow w;
    w.cube = cube_id(slot);
    w.t_begin = plan.trajectory.duration();
    Pose contact = start;
    contact.position.y += p.approach_gap;
    if (p.approach_gap > 0.0) plan.trajectory.append(p.approach_gap / p.speed, contact);
    w.t_contact = plan.trajectory.duration();
    Pose end = contact;
    end.position.y += p.distance;
    plan.trajectory.append(p.distance / p.speed, end);
    w.t_end = plan.trajectory.duration();
    plan.windows.push_back(w);
    plan.trajectory.append((end.position - start.position).norm() / p.transit_speed, start);
    cur = start;
  }
  return plan;
}

/// Short tap: approach, press `depth` past contact, back off.
inline Trajectory make_poke(const Scenario& sc, std::size_t slot, double depth) {
  const Pose start = effector_start_pose(sc, slot);
  Pose press = start;
  press.position.y += sc.push.approach_gap + depth;
  Trajectory t;
  t.samples.push_back({0.0, start});
  t.append((press.position - start.position).norm() / sc.push.speed, press);
  t.append((press.position - start.position).norm() / sc.push.transit_speed, start);
  return t;
}

// ---------------------------------------------------------------------------
// World construction

inline rigid::WorldState build_world(const Scenario& sc) {
  sc.validate();
  rigid::WorldState w;
  w.gravity = sc.gravity;
  w.dt = sc.timestep;
  w.solver = sc.solver;
  w.ground.material = {sc.friction, sc.restitution};
  const rigid::MaterialParams mat{sc.friction, sc.restitution};
  const auto masses = arranged_masses(sc);
  const double h = 0.5 * sc.cube_side;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const Pose pose{{slot_x(sc, i), 0.0, h}, UnitQuaternion::identity()};
    w.add(rigid::make_box(cube_id(i), masses[i], {h, h, h}, pose, mat));
  }
  rigid::RigidBody clone;
  clone.id = kCloneId;
  clone.role = rigid::BodyRole::EffectorClone;
  clone.mass = sc.params.clone_mass;
  clone.inertia = sc.params.clone_inertia;
  clone.half_extents = Vec3{sc.clone_side, sc.clone_side, sc.clone_side} * 0.5;
  clone.material = mat;
  clone.gravity_enabled = sc.clone_gravity;
  w.add(clone);
  return w;
}

/// World plus a decoupling link for the scenario's clone, starting at `start`.
inline decoupling::Simulation build_simulation(const Scenario& sc, const Pose& start) {
  decoupling::DecouplingLink link(kCloneId, sc.params, sc.condition, sc.integration);
  decoupling::Simulation sim(build_world(sc), std::move(link), start);
  if (sc.clone_gravity) sim.world().find(kCloneId)->gravity_enabled = true;
  return sim;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ParseError(field, "expected [x, y, z]");
  for (const auto& e : j)
    if (!e.is_number()) throw ParseError(field, "expected numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline double num(const json& obj, const std::string& key, double fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(path + key, "expected a number");
  return v.get<double>();
}

inline int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ":" + std::to_string(line_of(text, e.byte)), e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw ParseError(path + key, "unknown field");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : t.samples) {
    const auto& q = s.pose.orientation;
    samples.push_back({{"t", s.t},
                       {"position", detail::vec_json(s.pose.position)},
                       {"orientation", {q.w, q.x, q.y, q.z}}});
  }
  return {{"samples", samples}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("samples") || !j["samples"].is_array())
    throw ParseError("samples", "expected an array of samples");
  Trajectory t;
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const auto& s = j["samples"][i];
    const std::string path = "samples[" + std::to_string(i) + "].";
    if (!s.contains("t") || !s["t"].is_number()) throw ParseError(path + "t", "expected a number");
    TrajectorySample ts;
    ts.t = s["t"].get<double>();
    if (!s.contains("position")) throw ParseError(path + "position", "missing");
    ts.pose.position = detail::vec_from(s["position"], path + "position");
    if (s.contains("orientation")) {
      const auto& q = s["orientation"];
      if (!q.is_array() || q.size() != 4) throw ParseError(path + "orientation", "expected [w, x, y, z]");
      ts.pose.orientation = UnitQuaternion{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                           q[3].get<double>()}
                                .normalized();
    }
    t.samples.push_back(ts);
  }
  t.validate();
  return t;
}

inline Trajectory load_trajectory(const std::string& path) {
  return trajectory_from_json(detail::parse_text(detail::read_file(path), path));
}

inline nlohmann::json to_json(const Scenario& sc) {
  using nlohmann::json;
  json j;
  j["masses"] = sc.masses;
  j["cube_side"] = sc.cube_side;
  j["cube_spacing"] = sc.cube_spacing;
  j["arrangement_seed"] = sc.arrangement_seed;
  j["shuffle"] = sc.shuffle;
  j["k"] = sc.params.linear_stiffness;
  j["kappa"] = sc.params.torsional_stiffness;
  j["clone_mass"] = sc.params.clone_mass;
  j["clone_side"] = sc.clone_side;
  j["friction"] = sc.friction;
  j["restitution"] = sc.restitution;
  j["condition"] = std::string(decoupling::to_string(sc.condition));
  j["integration"] = sc.integration == IntegrationMode::Exact ? "exact" : "explicit";
  j["clone_gravity"] = sc.clone_gravity;
  j["gravity"] = detail::vec_json(sc.gravity);
  j["timestep"] = sc.timestep;
  j["solver"] = {{"iterations", sc.solver.velocity_iterations},
                 {"baumgarte", sc.solver.baumgarte},
                 {"slop", sc.solver.penetration_slop},
                 {"margin", sc.solver.contacts.margin}};
  j["push"] = {{"speed", sc.push.speed},
               {"distance", sc.push.distance},
               {"approach_gap", sc.push.approach_gap},
               {"transit_speed", sc.push.transit_speed},
               {"hover", sc.push.hover}};
  if (!sc.trajectory_path.empty()) j["trajectory"] = sc.trajectory_path;
  return j;
}

/// Parses and validates; every absent field takes its default.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::num;
  if (!j.is_object()) throw ParseError("<root>", "expected an object");
  detail::check_keys(j,
                     {"masses", "cube_side", "cube_spacing", "arrangement_seed", "shuffle", "k", "kappa",
                      "clone_mass", "clone_side", "friction", "restitution", "condition", "integration",
                      "clone_gravity", "gravity", "timestep", "solver", "push", "trajectory"},
                     "");
  Scenario sc;
  if (!j.contains("masses") || !j["masses"].is_array()) throw ParseError("masses", "expected an array of kg");
  for (std::size_t i = 0; i < j["masses"].size(); ++i) {
    if (!j["masses"][i].is_number()) throw ParseError("masses[" + std::to_string(i) + "]", "expected a number");
    sc.masses.push_back(j["masses"][i].get<double>());
  }
  sc.cube_side = num(j, "cube_side", sc.cube_side, "");
  sc.cube_spacing = num(j, "cube_spacing", sc.cube_spacing, "");
  if (j.contains("arrangement_seed")) {
    if (!j["arrangement_seed"].is_number_unsigned()) throw ParseError("arrangement_seed", "expected an unsigned integer");
    sc.arrangement_seed = j["arrangement_seed"].get<std::uint64_t>();
  }
  if (j.contains("shuffle")) {
    if (!j["shuffle"].is_boolean()) throw ParseError("shuffle", "expected a boolean");
    sc.shuffle = j["shuffle"].get<bool>();
  }
  const double k = num(j, "k", sc.params.linear_stiffness, "");
  const double kappa = num(j, "kappa", sc.params.torsional_stiffness, "");
  const double clone_mass = num(j, "clone_mass", sc.params.clone_mass, "");
  sc.clone_side = num(j, "clone_side", sc.clone_side, "");
  if (!(clone_mass > 0.0)) throw ValidationError("clone mass must be positive");
  if (!(sc.clone_side > 0.0)) throw ValidationError("clone side must be positive");
  sc.params = {k, kappa, clone_mass, box_inertia(clone_mass, Vec3{sc.clone_side, sc.clone_side, sc.clone_side} * 0.5)};
  sc.friction = num(j, "friction", sc.friction, "");
  sc.restitution = num(j, "restitution", sc.restitution, "");
  if (j.contains("condition")) {
    if (!j["condition"].is_string()) throw ParseError("condition", "expected \"C1\" or \"C2\"");
    try {
      sc.condition = decoupling::parse_condition(j["condition"].get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ParseError("condition", e.what());
    }
  }
  if (j.contains("integration")) {
    const auto& v = j["integration"];
    if (v == "exact")
      sc.integration = IntegrationMode::Exact;
    else if (v == "explicit")
      sc.integration = IntegrationMode::Explicit;
    else
      throw ParseError("integration", "expected \"exact\" or \"explicit\"");
  }
  if (j.contains("clone_gravity")) {
    if (!j["clone_gravity"].is_boolean()) throw ParseError("clone_gravity", "expected a boolean");
    sc.clone_gravity = j["clone_gravity"].get<bool>();
  }
  if (j.contains("gravity")) sc.gravity = detail::vec_from(j["gravity"], "gravity");
  sc.timestep = num(j, "timestep", sc.timestep, "");
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    if (!s.is_object()) throw ParseError("solver", "expected an object");
    detail::check_keys(s, {"iterations", "baumgarte", "slop", "margin"}, "solver.");
    if (s.contains("iterations")) {
      if (!s["iterations"].is_number_integer()) throw ParseError("solver.iterations", "expected an integer");
      sc.solver.velocity_iterations = s["iterations"].get<int>();
    }
    sc.solver.baumgarte = num(s, "baumgarte", sc.solver.baumgarte, "solver.");
    sc.solver.penetration_slop = num(s, "slop", sc.solver.penetration_slop, "solver.");
    sc.solver.contacts.margin = num(s, "margin", sc.solver.contacts.margin, "solver.");
  }
  if (j.contains("push")) {
    const auto& p = j["push"];
    if (!p.is_object()) throw ParseError("push", "expected an object");
    detail::check_keys(p, {"speed", "distance", "approach_gap", "transit_speed", "hover"}, "push.");
    sc.push.speed = num(p, "speed", sc.push.speed, "push.");
    sc.push.distance = num(p, "distance", sc.push.distance, "push.");
    sc.push.approach_gap = num(p, "approach_gap", sc.push.approach_gap, "push.");
    sc.push.transit_speed = num(p, "transit_speed", sc.push.transit_speed, "push.");
    sc.push.hover = num(p, "hover", sc.push.hover, "push.");
  }
  if (j.contains("trajectory")) {
    if (!j["trajectory"].is_string()) throw ParseError("trajectory", "expected a file path");
    sc.trajectory_path = j["trajectory"].get<std::string>();
  }
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  return scenario_from_json(detail::parse_text(detail::read_file(path), path));
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << to_json(sc).dump(2) << '\n';
}

}  // namespace phsim::scenario
