#pragma once

// CSV and JSON outputs: trial records, per-step traces, sweep rows, the
// summary report and the run manifest. Column layouts are listed in
// docs/formats.md and must stay stable.

#include <phsim/decoupling.hpp>
#include <phsim/harness.hpp>
#include <phsim/scenario.hpp>

#include <json.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace phsim::records {

using experiment::TrialRecord;

inline constexpr std::string_view kVersion = "0.1.0";

/// Shortest round-trip text for a double, independent of the C locale.
inline std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline std::string join(const std::vector<double>& v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += fmt(v[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trial records

inline constexpr std::string_view kTrialHeader =
    "trial_id,task,condition,reference_kg,masses_kg,arrangement_seed,peak_displacement_m,answer,correct,wall_time_s";

inline std::string trial_row(const TrialRecord& r) {
  std::string s;
  s += std::to_string(r.trial_id);
  s += ',';
  s += experiment::to_string(r.task);
  s += ',';
  s += decoupling::to_string(r.condition);
  s += ',';
  if (r.task == experiment::TaskKind::Staircase) s += fmt(r.reference_mass);
  s += ',';
  s += join(r.masses);
  s += ',';
  s += std::to_string(r.arrangement_seed);
  s += ',';
  s += join(r.peak_displacement);
  s += ',';
  s += r.answer;
  s += ',';
  s += r.correct ? "1" : "0";
  s += ',';
  s += fmt(r.wall_time);
  return s;
}

inline void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kTrialHeader << '\n';
  for (const auto& r : records) os << trial_row(r) << '\n';
}

inline std::string trials_csv(const std::vector<TrialRecord>& records) {
  std::ostringstream os;
  write_trials_csv(os, records);
  return os.str();
}

inline nlohmann::json to_json(const TrialRecord& r) {
  nlohmann::json j;
  j["trial_id"] = r.trial_id;
  j["task"] = std::string(experiment::to_string(r.task));
  j["condition"] = std::string(decoupling::to_string(r.condition));
  if (r.task == experiment::TaskKind::Staircase)
    j["reference_kg"] = r.reference_mass;
  else
    j["reference_kg"] = nullptr;
  j["masses_kg"] = r.masses;
  j["arrangement_seed"] = r.arrangement_seed;
  j["peak_displacement_m"] = r.peak_displacement;
  j["answer"] = r.answer;
  j["correct"] = r.correct;
  j["wall_time_s"] = r.wall_time;
  return j;
}

// ---------------------------------------------------------------------------
// Per-step trace

inline constexpr std::string_view kTraceHeader =
    "time_s,body_id,role,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,decoupling_m";

/// One row per body for the current simulation state.
inline void write_trace_rows(std::ostream& os, const decoupling::Simulation& sim) {
  const auto& w = sim.world();
  for (const auto& b : w.bodies) {
    const double d = b.id == sim.link().clone_id() ? sim.link().displacement() : 0.0;
    const auto& p = b.pose.position;
    const auto& q = b.pose.orientation;
    os << fmt(w.time) << ',' << std::to_string(b.id) << ',' << rigid::to_string(b.role) << ',' << fmt(p.x) << ',' << fmt(p.y)
       << ',' << fmt(p.z) << ',' << fmt(q.w) << ',' << fmt(q.x) << ',' << fmt(q.y) << ',' << fmt(q.z) << ','
       << fmt(b.linear_velocity.x) << ',' << fmt(b.linear_velocity.y) << ',' << fmt(b.linear_velocity.z) << ','
       << fmt(b.angular_velocity.x) << ',' << fmt(b.angular_velocity.y) << ',' << fmt(b.angular_velocity.z)
       << ',' << fmt(d) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sweeps

inline constexpr std::string_view kSweepHeader = "param,value,slot,mass_kg,peak_displacement_m";

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::size_t slot = 0;
  double mass = 0.0;
  double peak = 0.0;
};

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepHeader << '\n';
  for (const auto& r : rows)
    os << r.param << ',' << fmt(r.value) << ',' << std::to_string(r.slot + 1) << ',' << fmt(r.mass) << ',' << fmt(r.peak) << '\n';
}

// ---------------------------------------------------------------------------
// Summary report

inline nlohmann::json sorting_report(const std::vector<TrialRecord>& records) {
  std::map<std::string, std::vector<TrialRecord>> by_condition;
  for (const auto& r : records) by_condition[std::string(decoupling::to_string(r.condition))].push_back(r);
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& [name, recs] : by_condition) {
    const auto s = experiment::summarize(recs);
    const int answered = s.correct + s.incorrect;
    conds[name] = {{"trials", s.trials},
                   {"answered", answered},
                   {"correct", s.correct},
                   {"incorrect", s.incorrect},
                   {"dont_know", s.dont_know},
                   {"success_rate", s.trials ? static_cast<double>(s.correct) / s.trials : 0.0}};
  }
  return {{"task", "sorting"}, {"conditions", conds}};
}

inline nlohmann::json staircase_report(const experiment::StaircaseRun& run) {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const auto& r = run.results[i];
    const auto& st = run.staircases[i];
    list.push_back({{"reference_kg", r.reference_mass},
                    {"jnd_kg", r.jnd},
                    {"weber_ratio", r.jnd / r.reference_mass},
                    {"trials", st.trials},
                    {"reversals", st.reversal_count},
                    {"clamp_events", st.clamp_events},
                    {"final_step_kg", st.step_size},
                    {"reversal_differences_kg", st.reversal_differences}});
  }
  return {{"task", "staircase"}, {"jnd", list}};
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> outputs;
};

inline nlohmann::json to_json(const Manifest& m) {
  return {{"tool", "phsim"},
          {"version", std::string(kVersion)},
          {"command", m.command},
          {"seed", m.seed},
          {"config", m.config},
          {"outputs", m.outputs}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace phsim::records
