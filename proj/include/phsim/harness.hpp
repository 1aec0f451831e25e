#pragma once

// Automated sorting and staircase experiments. Each trial builds a private
// world, pushes every cube with the standard trajectory, and hands the peak
// clone displacement per cube to the observer.

#include <phsim/decoupling.hpp>
#include <phsim/observer.hpp>
#include <phsim/scenario.hpp>
#include <phsim/staircase.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace phsim::experiment {

using decoupling::Condition;
using scenario::Scenario;

enum class TaskKind { Sorting, SortingIntro, Staircase, Free };

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Sorting: return "sorting";
    case TaskKind::SortingIntro: return "sorting-intro";
    case TaskKind::Staircase: return "staircase";
    case TaskKind::Free: break;
  }
  return "free";
}

/// One answered (or skipped) trial. Object lists are in slot order, left to right.
struct TrialRecord {
  int trial_id = 0;
  TaskKind task = TaskKind::Sorting;
  Condition condition = Condition::Decoupled;
  double reference_mass = 0.0;  // staircase only [kg]
  std::vector<double> masses;   // [kg]
  std::uint64_t arrangement_seed = 0;
  std::vector<double> peak_displacement;  // [m]
  std::string answer;
  bool correct = false;
  double wall_time = 0.0;  // [s]; simulated duration for synthetic trials

  bool operator==(const TrialRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Answers

inline constexpr std::string_view kDontKnow = "dont-know";
inline constexpr std::string_view kNoDifference = "no-difference";

/// "order=a;b;c": slots (1-based) from lightest to heaviest.
inline std::string format_order(const std::vector<std::size_t>& light_to_heavy) {
  std::string s = "order=";
  for (std::size_t i = 0; i < light_to_heavy.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(light_to_heavy[i] + 1);
  }
  return s;
}

inline std::string format_heavier(std::size_t slot) { return "heavier=" + std::to_string(slot + 1); }

inline std::vector<std::size_t> true_order(const std::vector<double>& masses) {
  std::vector<std::size_t> idx(masses.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return masses[a] < masses[b]; });
  return idx;
}

/// Full ranking from pairwise judgements; empty when any pair looks equal
/// or the judgements are not transitive.
inline std::vector<std::size_t> observer_rank(const std::vector<double>& signals, const ObserverModel& model,
                                              std::mt19937_64& rng) {
  const std::size_t n = signals.size();
  std::vector<int> wins(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const PairAnswer a = observer_perceive_pair(signals[i], signals[j], model, rng);
      if (a == PairAnswer::NoDifference) return {};
      ++wins[a == PairAnswer::HeavierIsA ? i : j];
    }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wins[a] < wins[b]; });
  for (std::size_t k = 0; k < n; ++k)
    if (wins[order[k]] != static_cast<int>(k)) return {};
  return order;
}

// ---------------------------------------------------------------------------
// Push runs

struct PushRun {
  std::vector<double> peak_displacement;  // per slot [m]
  double duration = 0.0;                  // [s]
};

using StepObserver = std::function<void(const decoupling::Simulation&)>;

/// Simulates the standard push against the given slots, in order, and
/// returns the peak |d| recorded while the clone touched each cube.
inline PushRun run_pushes(const Scenario& sc, const std::vector<std::size_t>& slot_order,
                          const StepObserver& on_step = {}) {
  const scenario::PushPlan plan = scenario::make_push_plan(sc, slot_order);
  decoupling::Simulation sim = scenario::build_simulation(sc, plan.trajectory.samples.front().pose);
  PushRun run;
  run.peak_displacement.assign(sc.masses.size(), 0.0);
  const double dt = sc.timestep;
  const auto steps = static_cast<std::uint64_t>(std::ceil(plan.trajectory.duration() / dt - 1e-9));
  for (std::uint64_t i = 1; i <= steps; ++i) {
    sim.step(scenario::trajectory_sample(plan.trajectory, static_cast<double>(i) * dt).pose);
    const double d = sim.link().displacement();
    for (rigid::BodyId id : sim.clone_contacts()) {
      const std::size_t slot = id - 1;
      if (slot < run.peak_displacement.size())
        run.peak_displacement[slot] = std::max(run.peak_displacement[slot], d);
    }
    if (on_step) on_step(sim);
  }
  run.duration = static_cast<double>(steps) * dt;
  return run;
}

inline std::vector<std::size_t> shuffled_slots(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  return v;
}

// ---------------------------------------------------------------------------
// Sorting

/// One sorting trial. Three cubes: full ranking. Two cubes: pick the heaviest.
/// The trial seed fixes the arrangement, push order and observer noise.
inline TrialRecord run_sorting_trial(Scenario sc, const ObserverModel& observer, Condition condition,
                                     std::uint64_t trial_seed, int trial_id = 0) {
  if (sc.masses.size() != 2 && sc.masses.size() != 3)
    throw InvalidArgument("sorting trials need 2 or 3 cubes");
  observer.validate();
  sc.condition = condition;
  sc.shuffle = true;
  sc.arrangement_seed = trial_seed;
  std::mt19937_64 rng(trial_seed);
  const auto order = shuffled_slots(sc.masses.size(), rng);
  std::mt19937_64 noise(trial_seed ^ observer.seed);

  const PushRun run = run_pushes(sc, order);
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.task = sc.masses.size() == 3 ? TaskKind::Sorting : TaskKind::SortingIntro;
  rec.condition = condition;
  rec.masses = scenario::arranged_masses(sc);
  rec.arrangement_seed = trial_seed;
  rec.peak_displacement = run.peak_displacement;
  rec.wall_time = run.duration;
  const auto ranking = observer_rank(run.peak_displacement, observer, noise);
  if (ranking.empty()) {
    rec.answer = kDontKnow;
    rec.correct = false;
    return rec;
  }
  const auto truth = true_order(rec.masses);
  if (rec.task == TaskKind::SortingIntro) {
    rec.answer = format_heavier(ranking.back());
    rec.correct = ranking.back() == truth.back();
  } else {
    rec.answer = format_order(ranking);
    rec.correct = ranking == truth;
  }
  return rec;
}

/// Runs fn(0..n-1) on up to `workers` threads; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn, unsigned workers = std::thread::hardware_concurrency())
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (unsigned w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

struct SortingSummary {
  int trials = 0;
  int correct = 0;
  int incorrect = 0;
  int dont_know = 0;
};

inline SortingSummary summarize(const std::vector<TrialRecord>& records) {
  SortingSummary s;
  for (const auto& r : records) {
    ++s.trials;
    if (r.answer == kDontKnow)
      ++s.dont_know;
    else if (r.correct)
      ++s.correct;
    else
      ++s.incorrect;
  }
  return s;
}

/// `trials` sorting trials under one condition. Trial seeds are drawn from
/// `seed` in trial order, so the output does not depend on `workers`.
inline std::vector<TrialRecord> run_sorting_block(const Scenario& sc, const ObserverModel& observer,
                                                  Condition condition, int trials, std::uint64_t seed,
                                                  unsigned workers = std::thread::hardware_concurrency()) {
  if (trials < 0) throw InvalidArgument("trial count must be >= 0");
  std::mt19937_64 master(seed);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(trials));
  for (auto& s : seeds) s = master();
  return parallel_map(
      seeds.size(),
      [&](std::size_t i) { return run_sorting_trial(sc, observer, condition, seeds[i], static_cast<int>(i) + 1); },
      workers);
}

// ---------------------------------------------------------------------------
// Staircase

/// A two-cube comparison: reference vs comparison in random slots.
inline TrialRecord run_comparison_trial(Scenario sc, const ObserverModel& observer, double reference,
                                        double comparison, std::uint64_t trial_seed, int trial_id = 0) {
  observer.validate();
  std::mt19937_64 rng(trial_seed);
  const bool comparison_left = (rng() & 1u) != 0;
  sc.masses = comparison_left ? std::vector<double>{comparison, reference} : std::vector<double>{reference, comparison};
  sc.shuffle = false;
  sc.arrangement_seed = trial_seed;
  const auto order = shuffled_slots(2, rng);
  std::mt19937_64 noise(trial_seed ^ observer.seed);

  const PushRun run = run_pushes(sc, order);
  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.task = TaskKind::Staircase;
  rec.condition = sc.condition;
  rec.reference_mass = reference;
  rec.masses = sc.masses;
  rec.arrangement_seed = trial_seed;
  rec.peak_displacement = run.peak_displacement;
  rec.wall_time = run.duration;
  const PairAnswer a = observer_perceive_pair(run.peak_displacement[0], run.peak_displacement[1], observer, noise);
  if (a == PairAnswer::NoDifference) {
    rec.answer = kNoDifference;
    rec.correct = false;
  } else {
    const std::size_t chosen = a == PairAnswer::HeavierIsA ? 0 : 1;
    rec.answer = format_heavier(chosen);
    rec.correct = chosen == (comparison_left ? 0u : 1u);
  }
  return rec;
}

inline StaircaseAnswer staircase_answer_of(const TrialRecord& r) {
  return r.answer == kNoDifference ? StaircaseAnswer::NotPerceived : StaircaseAnswer::Perceived;
}

struct StaircaseRun {
  std::vector<StaircaseState> staircases;
  std::vector<JndResult> results;
  std::vector<TrialRecord> trials;  // in presentation order
};

/// Signal source for a comparison trial. The default simulates it.
using ComparisonFn = std::function<TrialRecord(double reference, double comparison, std::uint64_t seed, int id)>;

/// Staircases for all references, interleaved: each trial goes to a random
/// unfinished staircase. With one staircase left no choice is drawn.
inline StaircaseRun run_interleaved_staircases(const std::vector<StaircaseConfig>& configs,
                                               const ComparisonFn& trial, std::uint64_t seed) {
  if (configs.empty()) throw InvalidArgument("need at least one reference");
  StaircaseRun out;
  for (const auto& c : configs) out.staircases.push_back(staircase_init(c));
  std::mt19937_64 rng(seed);
  int next_id = 1;
  for (;;) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < out.staircases.size(); ++i)
      if (!out.staircases[i].finished) open.push_back(i);
    if (open.empty()) break;
    const std::size_t pick = open.size() == 1 ? open[0] : open[static_cast<std::size_t>(rng() % open.size())];
    StaircaseState& st = out.staircases[pick];
    TrialRecord rec = trial(st.reference_mass, st.comparison_mass, rng(), next_id++);
    st = staircase_update(st, staircase_answer_of(rec));
    out.trials.push_back(std::move(rec));
  }
  for (const auto& st : out.staircases) out.results.push_back(jnd_estimate(st));
  return out;
}

inline StaircaseRun run_interleaved_staircases(const std::vector<StaircaseConfig>& configs, const Scenario& sc,
                                               const ObserverModel& observer, std::uint64_t seed) {
  return run_interleaved_staircases(
      configs,
      [&](double ref, double cmp, std::uint64_t s, int id) { return run_comparison_trial(sc, observer, ref, cmp, s, id); },
      seed);
}

inline std::vector<StaircaseConfig> default_configs(const std::vector<double>& references) {
  std::vector<StaircaseConfig> out;
  for (double r : references) {
    const auto c = default_staircase_config(r);
    if (!c) throw InvalidArgument("no built-in staircase parameters for reference " + std::to_string(r) + " kg");
    out.push_back(*c);
  }
  return out;
}

}  // namespace phsim::experiment
