#pragma once

// Live session state machine. Transport-free: feed it client messages and
// call tick() once per physics step; it returns the server messages to send.
// The wire schema is described field by field in docs/protocol.md.

#include <phsim/harness.hpp>
#include <phsim/records.hpp>
#include <phsim/scenario.hpp>
#include <phsim/staircase.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace phsim::session {

using nlohmann::json;

inline constexpr int kProtocolVersion = 1;

/// 64-bit FNV-1a as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

inline std::string scenario_digest(const scenario::Scenario& sc) { return fnv1a_hex(scenario::to_json(sc).dump()); }

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json quat_json(const UnitQuaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

/// world-state payload (without type/seq). `link` is null for a world
/// without an effector clone.
inline json snapshot_for_client(const rigid::WorldState& world, const decoupling::DecouplingLink* link) {
  json bodies = json::array();
  for (const auto& b : world.bodies) {
    json e{{"id", b.id},
           {"role", std::string(rigid::to_string(b.role))},
           {"position", vec_json(b.pose.position)},
           {"orientation", quat_json(b.pose.orientation)},
           {"half_extents", vec_json(b.half_extents)}};
    if (link && b.id == link->clone_id()) e["decoupling"] = link->displacement();
    bodies.push_back(std::move(e));
  }
  json j{{"t", world.time}, {"bodies", std::move(bodies)}};
  if (link) {
    j["condition"] = std::string(decoupling::to_string(link->condition()));
    j["real"] = {{"position", vec_json(link->real_pose().position)},
                 {"orientation", quat_json(link->real_pose().orientation)}};
  } else {
    j["condition"] = nullptr;
    j["real"] = nullptr;
  }
  return j;
}

struct SessionConfig {
  scenario::Scenario base;          // world and defaults for every task
  double stream_rate = 60.0;        // world-state messages per simulated second
  double smoothing_tau = 0.0;       // [s] exponential pose filter; 0 = off
  std::uint64_t seed = 0;           // arrangement / interleaving stream

  static SessionConfig defaults() {
    SessionConfig c;
    c.base.masses = {0.015, 0.200, 0.800};
    return c;
  }
};

/// Raised for malformed or out-of-order client input; the session continues.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SessionCore {
 public:
  enum class Task { None, Free, Sorting, Staircase };

  explicit SessionCore(SessionConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.base.validate();
    if (!(cfg_.stream_rate > 0.0)) throw InvalidArgument("stream rate must be positive");
    if (!(cfg_.smoothing_tau >= 0.0)) throw InvalidArgument("smoothing time constant must be >= 0");
    load_world(cfg_.base);
  }

  // -- inbound ------------------------------------------------------------

  /// Handles one client message. Duplicates and stale sequence numbers are
  /// dropped without effect; errors come back as "error" messages.
  std::vector<json> handle(const json& msg) {
    std::vector<json> out;
    try {
      if (!msg.is_object()) throw ProtocolError("message must be an object");
      if (!msg.contains("seq") || !msg["seq"].is_number_unsigned())
        throw ProtocolError("missing or invalid seq");
      if (!msg.contains("type") || !msg["type"].is_string()) throw ProtocolError("missing type");
      const auto seq = msg["seq"].get<std::uint64_t>();
      if (last_client_seq_ && seq <= *last_client_seq_) {
        ++dropped_duplicates_;
        return out;
      }
      const std::string type = msg["type"];
      const json& body = msg;
      if (type == "hello") {
        last_client_seq_ = seq;
        on_hello(body, out);
      } else if (!handshaken_) {
        throw ProtocolError("handshake required before '" + type + "'");
      } else if (type == "pose-update") {
        last_client_seq_ = seq;
        on_pose(body);
      } else if (type == "start-task") {
        last_client_seq_ = seq;
        on_start(body, out);
      } else if (type == "answer") {
        last_client_seq_ = seq;
        on_answer(body, out);
      } else {
        throw ProtocolError("unknown message type '" + type + "'");
      }
    } catch (const std::exception& e) {
      out.push_back(make("error", {{"message", e.what()}}));
    }
    return out;
  }

  /// Parses raw text first; malformed JSON yields an error message.
  std::vector<json> handle_text(std::string_view text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) return {make("error", {{"message", "malformed JSON"}})};
    return handle(j);
  }

  // -- physics ------------------------------------------------------------

  /// Advances one physics step with the latest (held) client pose. Returns
  /// a world-state message when one is due at the stream rate.
  std::optional<json> tick() {
    Pose target = target_pose_;
    if (cfg_.smoothing_tau > 0.0) {
      const double a = 1.0 - std::exp(-sim_->world().dt / cfg_.smoothing_tau);
      filtered_.position = filtered_.position + (target.position - filtered_.position) * a;
      filtered_.orientation = slerp(filtered_.orientation, target.orientation, a);
      target = filtered_;
    }
    sim_->step(target);
    const double d = sim_->link().displacement();
    for (rigid::BodyId id : sim_->clone_contacts()) {
      const std::size_t slot = id - 1;
      if (slot < peaks_.size()) peaks_[slot] = std::max(peaks_[slot], d);
    }
    ++steps_;
    const double period = 1.0 / cfg_.stream_rate;
    if (sim_->world().time + 1e-12 >= next_stream_time_) {
      next_stream_time_ += period * std::max(1.0, std::floor((sim_->world().time - next_stream_time_) / period) + 1.0);
      return snapshot();
    }
    return std::nullopt;
  }

  json snapshot() { return make("world-state", snapshot_for_client(sim_->world(), &sim_->link())); }

  // -- inspection -----------------------------------------------------------

  Task task() const { return task_; }
  bool handshaken() const { return handshaken_; }
  const decoupling::Simulation& simulation() const { return *sim_; }
  const std::vector<experiment::TrialRecord>& records() const { return records_; }
  const std::map<std::size_t, std::string>& labels() const { return labels_; }
  const std::vector<experiment::StaircaseState>& staircases() const { return staircases_; }
  int active_trial() const { return trial_id_; }
  std::uint64_t dropped_duplicates() const { return dropped_duplicates_; }
  std::uint64_t steps() const { return steps_; }
  const std::string& digest() const { return digest_; }
  const SessionConfig& config() const { return cfg_; }

  /// Wraps a payload with type and the next server sequence number.
  json make(std::string_view type, json payload = json::object()) {
    payload["type"] = std::string(type);
    payload["seq"] = ++server_seq_;
    return payload;
  }

 private:
  void load_world(const scenario::Scenario& sc) {
    world_sc_ = sc;
    spawn_ = scenario::effector_start_pose(sc, 0);
    sim_.emplace(scenario::build_simulation(sc, spawn_));
    target_pose_ = filtered_ = spawn_;
    peaks_.assign(sc.masses.size(), 0.0);
    next_stream_time_ = sim_->world().time;
    trial_start_time_ = sim_->world().time;
    digest_ = scenario_digest(sc);
  }

  void on_hello(const json& m, std::vector<json>& out) {
    if (!m.contains("protocol") || !m["protocol"].is_number_integer())
      throw ProtocolError("hello needs an integer protocol version");
    if (m["protocol"].get<int>() != kProtocolVersion)
      throw ProtocolError("unsupported protocol " + m["protocol"].dump() + ", server speaks " +
                          std::to_string(kProtocolVersion));
    handshaken_ = true;
    out.push_back(make("welcome", {{"protocol", kProtocolVersion},
                                   {"scenario_digest", digest_},
                                   {"dt", sim_->world().dt},
                                   {"stream_rate", cfg_.stream_rate}}));
  }

  static Vec3 vec3_field(const json& m, const char* key) {
    if (!m.contains(key) || !m[key].is_array() || m[key].size() != 3)
      throw ProtocolError(std::string(key) + " must be [x, y, z]");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      if (!m[key][i].is_number()) throw ProtocolError(std::string(key) + " must hold numbers");
    }
    v = {m[key][0].get<double>(), m[key][1].get<double>(), m[key][2].get<double>()};
    if (!v.finite()) throw ProtocolError(std::string(key) + " must be finite");
    return v;
  }

  void on_pose(const json& m) {
    Pose p;
    p.position = vec3_field(m, "position");
    if (m.contains("orientation")) {
      const auto& o = m["orientation"];
      if (!o.is_array() || o.size() != 4) throw ProtocolError("orientation must be [w, x, y, z]");
      for (const auto& c : o)
        if (!c.is_number()) throw ProtocolError("orientation must hold numbers");
      const UnitQuaternion q{o[0].get<double>(), o[1].get<double>(), o[2].get<double>(), o[3].get<double>()};
      const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
      if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3) throw ProtocolError("orientation must be a unit quaternion");
      p.orientation = {q.w / n, q.x / n, q.y / n, q.z / n};
    } else {
      p.orientation = target_pose_.orientation;
    }
    target_pose_ = p;
  }

  scenario::Scenario with_overrides(const json& m) const {
    json base = scenario::to_json(cfg_.base);
    if (m.contains("overrides")) {
      if (!m["overrides"].is_object()) throw ProtocolError("overrides must be an object");
      for (const auto& [k, v] : m["overrides"].items()) base[k] = v;
    }
    return scenario::scenario_from_json(base);
  }

  void on_start(const json& m, std::vector<json>& out) {
    if (!m.contains("task") || !m["task"].is_string()) throw ProtocolError("start-task needs a task");
    const std::string task = m["task"];
    scenario::Scenario sc = with_overrides(m);
    labels_.clear();
    staircases_.clear();
    if (task == "free") {
      task_ = Task::Free;
      trial_id_ = 0;
      load_world(sc);
      out.push_back(make("trial-prompt", {{"trial_id", nullptr}, {"task", "free"}, {"cubes", cube_list()}}));
    } else if (task == "sorting") {
      if (sc.masses.size() != 2 && sc.masses.size() != 3) throw ProtocolError("sorting needs 2 or 3 cubes");
      task_ = Task::Sorting;
      start_sorting_trial(sc, out);
    } else if (task == "staircase") {
      std::vector<double> refs{0.015};
      if (m.contains("references")) {
        if (!m["references"].is_array() || m["references"].empty())
          throw ProtocolError("references must be a non-empty array of kg");
        refs.clear();
        for (const auto& r : m["references"]) {
          if (!r.is_number()) throw ProtocolError("references must hold numbers");
          refs.push_back(r.get<double>());
        }
      }
      for (const auto& c : experiment::default_configs(refs)) staircases_.push_back(experiment::staircase_init(c));
      task_ = Task::Staircase;
      staircase_sc_ = sc;
      start_staircase_trial(out);
    } else {
      throw ProtocolError("unknown task '" + task + "'");
    }
  }

  json cube_list() const {
    json cubes = json::array();
    for (std::size_t i = 0; i < world_sc_.masses.size(); ++i) {
      const auto* b = sim_->world().find(scenario::cube_id(i));
      cubes.push_back({{"slot", i + 1}, {"id", scenario::cube_id(i)}, {"position", vec_json(b->pose.position)}});
    }
    return cubes;
  }

  static std::vector<std::string> label_names(std::size_t n) {
    if (n == 2) return {"lightest", "heaviest"};
    return {"lightest", "intermediate", "heaviest"};
  }

  void start_sorting_trial(scenario::Scenario sc, std::vector<json>& out) {
    sc.shuffle = true;
    sc.arrangement_seed = rng_();
    load_world(sc);
    trial_id_ = ++trial_counter_;
    json names = json::array();
    for (const auto& n : label_names(sc.masses.size())) names.push_back(n);
    out.push_back(make("trial-prompt", {{"trial_id", trial_id_},
                                        {"task", sc.masses.size() == 3 ? "sorting" : "sorting-intro"},
                                        {"condition", std::string(decoupling::to_string(sc.condition))},
                                        {"labels", names},
                                        {"cubes", cube_list()}}));
  }

  void start_staircase_trial(std::vector<json>& out) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < staircases_.size(); ++i)
      if (!staircases_[i].finished) open.push_back(i);
    active_staircase_ = open.size() == 1 ? open[0] : open[static_cast<std::size_t>(rng_() % open.size())];
    const auto& st = staircases_[active_staircase_];
    scenario::Scenario sc = staircase_sc_;
    comparison_slot_ = (rng_() & 1u) != 0 ? 0 : 1;
    sc.masses = comparison_slot_ == 0 ? std::vector<double>{st.comparison_mass, st.reference_mass}
                                      : std::vector<double>{st.reference_mass, st.comparison_mass};
    sc.shuffle = false;
    sc.arrangement_seed = rng_();
    load_world(sc);
    trial_id_ = ++trial_counter_;
    out.push_back(make("trial-prompt", {{"trial_id", trial_id_},
                                        {"task", "staircase"},
                                        {"condition", std::string(decoupling::to_string(sc.condition))},
                                        {"reference_kg", st.reference_mass},
                                        {"comparison_kg", st.comparison_mass},
                                        {"step_kg", st.step_size},
                                        {"cubes", cube_list()}}));
  }

  experiment::TrialRecord base_record(experiment::TaskKind kind) const {
    experiment::TrialRecord r;
    r.trial_id = trial_id_;
    r.task = kind;
    r.condition = world_sc_.condition;
    r.masses = scenario::arranged_masses(world_sc_);
    r.arrangement_seed = world_sc_.arrangement_seed;
    r.peak_displacement = peaks_;
    r.wall_time = sim_->world().time - trial_start_time_;
    return r;
  }

  void on_answer(const json& m, std::vector<json>& out) {
    if (task_ != Task::Sorting && task_ != Task::Staircase) throw ProtocolError("no active trial");
    if (!m.contains("trial_id") || !m["trial_id"].is_number_integer() || m["trial_id"].get<int>() != trial_id_)
      throw ProtocolError("answer is not for the active trial " + std::to_string(trial_id_));
    if (!m.contains("payload") || !m["payload"].is_object()) throw ProtocolError("answer needs a payload object");
    const json& p = m["payload"];
    if (task_ == Task::Sorting)
      sorting_answer(p, out);
    else
      staircase_answer(p, out);
  }

  std::size_t slot_field(const json& p) const {
    if (!p.contains("cube") || !p["cube"].is_number_integer()) throw ProtocolError("payload needs a cube slot");
    const auto s = p["cube"].get<std::int64_t>();
    if (s < 1 || s > static_cast<std::int64_t>(world_sc_.masses.size())) throw ProtocolError("cube slot out of range");
    return static_cast<std::size_t>(s - 1);
  }

  void sorting_answer(const json& p, std::vector<json>& out) {
    const std::string action = p.value("action", "");
    const std::size_t n = world_sc_.masses.size();
    const auto names = label_names(n);
    if (action == "label") {
      const std::size_t slot = slot_field(p);
      const std::string label = p.value("label", "");
      if (std::find(names.begin(), names.end(), label) == names.end())
        throw ProtocolError("unknown label '" + label + "'");
      // A label belongs to one cube at a time; relabelling moves it.
      for (auto it = labels_.begin(); it != labels_.end();)
        it = it->second == label ? labels_.erase(it) : std::next(it);
      labels_[slot] = label;
      out.push_back(make("ack", {{"trial_id", trial_id_}, {"labels", labels_json()}}));
    } else if (action == "clear") {
      labels_.erase(slot_field(p));
      out.push_back(make("ack", {{"trial_id", trial_id_}, {"labels", labels_json()}}));
    } else if (action == "validate") {
      if (labels_.size() != n) throw ProtocolError("every cube needs a label before validating");
      std::vector<std::size_t> order;
      for (const auto& name : names)
        for (const auto& [slot, l] : labels_)
          if (l == name) order.push_back(slot);
      experiment::TrialRecord r = base_record(n == 3 ? experiment::TaskKind::Sorting : experiment::TaskKind::SortingIntro);
      const auto truth = experiment::true_order(r.masses);
      if (n == 3) {
        r.answer = experiment::format_order(order);
        r.correct = order == truth;
      } else {
        r.answer = experiment::format_heavier(order.back());
        r.correct = order.back() == truth.back();
      }
      finish_sorting(std::move(r), out);
    } else if (action == "dont-know") {
      experiment::TrialRecord r = base_record(n == 3 ? experiment::TaskKind::Sorting : experiment::TaskKind::SortingIntro);
      r.answer = experiment::kDontKnow;
      r.correct = false;
      finish_sorting(std::move(r), out);
    } else {
      throw ProtocolError("sorting action must be label, clear, validate or dont-know");
    }
  }

  json labels_json() const {
    json j = json::object();
    for (const auto& [slot, l] : labels_) j[std::to_string(slot + 1)] = l;
    return j;
  }

  void finish_sorting(experiment::TrialRecord r, std::vector<json>& out) {
    records_.push_back(r);
    labels_.clear();
    task_ = Task::Free;
    trial_id_ = 0;
    out.push_back(make("result", {{"records", json::array({records::to_json(r)})},
                                  {"csv", records::trials_csv({r})},
                                  {"finished", true}}));
  }

  void staircase_answer(const json& p, std::vector<json>& out) {
    const std::string choice = p.value("choice", "");
    experiment::TrialRecord r = base_record(experiment::TaskKind::Staircase);
    auto& st = staircases_[active_staircase_];
    r.reference_mass = st.reference_mass;
    if (choice == "no-difference") {
      r.answer = experiment::kNoDifference;
      r.correct = false;
    } else if (choice == "heavier") {
      const std::size_t slot = slot_field(p);
      r.answer = experiment::format_heavier(slot);
      r.correct = slot == comparison_slot_;
    } else {
      throw ProtocolError("staircase choice must be heavier or no-difference");
    }
    st = experiment::staircase_update(st, experiment::staircase_answer_of(r));
    records_.push_back(r);
    const bool all_done =
        std::all_of(staircases_.begin(), staircases_.end(), [](const auto& s) { return s.finished; });
    if (!all_done) {
      out.push_back(make("result", {{"records", json::array({records::to_json(r)})},
                                    {"csv", records::trials_csv({r})},
                                    {"finished", false}}));
      start_staircase_trial(out);
      return;
    }
    json jnds = json::array();
    for (const auto& s : staircases_) {
      const auto e = experiment::jnd_estimate(s);
      jnds.push_back({{"reference_kg", e.reference_mass}, {"jnd_kg", e.jnd}});
    }
    task_ = Task::Free;
    trial_id_ = 0;
    out.push_back(make("result", {{"records", json::array({records::to_json(r)})},
                                  {"csv", records::trials_csv({r})},
                                  {"jnd", jnds},
                                  {"finished", true}}));
  }

  SessionConfig cfg_;
  std::mt19937_64 rng_;
  std::optional<decoupling::Simulation> sim_;
  scenario::Scenario world_sc_;
  scenario::Scenario staircase_sc_;
  Pose spawn_, target_pose_, filtered_;
  std::vector<double> peaks_;
  double next_stream_time_ = 0.0;
  double trial_start_time_ = 0.0;
  std::string digest_;

  bool handshaken_ = false;
  std::optional<std::uint64_t> last_client_seq_;
  std::uint64_t server_seq_ = 0;
  std::uint64_t dropped_duplicates_ = 0;
  std::uint64_t steps_ = 0;

  Task task_ = Task::None;
  int trial_id_ = 0;
  int trial_counter_ = 0;
  std::map<std::size_t, std::string> labels_;
  std::vector<experiment::StaircaseState> staircases_;
  std::size_t active_staircase_ = 0;
  std::size_t comparison_slot_ = 0;
  std::vector<experiment::TrialRecord> records_;
};

}  // namespace phsim::session
