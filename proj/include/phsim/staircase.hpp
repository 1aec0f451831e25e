#pragma once

// Adaptive up/down staircase on the comparison mass.
//
// A "perceived" answer lowers the comparison by the current step, "not
// perceived" raises it. An answer differing from the previous one is a
// reversal; the step halves on every second reversal and the procedure ends
// at the tenth. The JND is the mean presented difference over the reversal
// trials, skipping the first two.

#include <phsim/errors.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace phsim::experiment {

inline constexpr int kReversalsToFinish = 10;
inline constexpr int kDiscardedReversals = 2;
inline constexpr double kComparisonClampMargin = 0.001;  // [kg]

enum class StaircaseAnswer { Perceived, NotPerceived };

struct StaircaseConfig {
  double reference_mass = 0.0;      // [kg]
  double initial_difference = 0.0;  // [kg]
  double initial_step = 0.0;        // [kg]
};

/// Built-in starting values for the 15 g, 200 g and 800 g references.
inline std::optional<StaircaseConfig> default_staircase_config(double reference_mass) {
  struct Row {
    double ref, diff, step;
  };
  static constexpr Row kTable[] = {
      {0.015, 0.175, 0.050},
      {0.200, 0.600, 0.150},
      {0.800, 0.700, 0.200},
  };
  for (const auto& r : kTable)
    if (std::abs(reference_mass - r.ref) < 1e-9) return StaircaseConfig{r.ref, r.diff, r.step};
  return std::nullopt;
}

struct StaircaseState {
  double reference_mass = 0.0;
  double comparison_mass = 0.0;
  double step_size = 0.0;
  double initial_step = 0.0;
  int reversal_count = 0;
  std::optional<StaircaseAnswer> last_answer;
  std::vector<double> reversal_differences;  // [kg]
  int trials = 0;
  int clamp_events = 0;  // comparison pushed back up to reference + 1 g
  bool finished = false;

  double difference() const { return comparison_mass - reference_mass; }
};

inline StaircaseState staircase_init(const StaircaseConfig& cfg) {
  if (!(cfg.reference_mass > 0.0)) throw InvalidArgument("reference mass must be positive");
  if (!(cfg.initial_difference > 0.0)) throw InvalidArgument("initial difference must be positive");
  if (!(cfg.initial_step > 0.0)) throw InvalidArgument("initial step must be positive");
  StaircaseState s;
  s.reference_mass = cfg.reference_mass;
  s.comparison_mass = cfg.reference_mass + cfg.initial_difference;
  s.step_size = cfg.initial_step;
  s.initial_step = cfg.initial_step;
  return s;
}

inline StaircaseState staircase_init(double reference_mass) {
  const auto cfg = default_staircase_config(reference_mass);
  if (!cfg)
    throw InvalidArgument("no built-in staircase parameters for reference " +
                          std::to_string(reference_mass * 1000.0) +
                          " g; give an initial difference and step");
  return staircase_init(*cfg);
}

inline StaircaseState staircase_update(StaircaseState s, StaircaseAnswer answer) {
  if (s.finished) throw StateError("staircase already finished");
  const double presented = s.difference();
  s.trials += 1;
  s.comparison_mass += answer == StaircaseAnswer::Perceived ? -s.step_size : s.step_size;
  if (s.last_answer && *s.last_answer != answer) {
    s.reversal_count += 1;
    s.reversal_differences.push_back(presented);
    if (s.reversal_count % 2 == 0) s.step_size *= 0.5;
  }
  s.last_answer = answer;
  if (s.comparison_mass <= s.reference_mass) {
    s.comparison_mass = s.reference_mass + kComparisonClampMargin;
    s.clamp_events += 1;
  }
  s.finished = s.reversal_count >= kReversalsToFinish;
  return s;
}

struct JndResult {
  double reference_mass = 0.0;
  double jnd = 0.0;
  std::vector<double> reversal_differences;  // the values averaged
};

inline JndResult jnd_estimate(const StaircaseState& s) {
  if (!s.finished) throw StateError("JND needs a finished staircase");
  JndResult r;
  r.reference_mass = s.reference_mass;
  r.reversal_differences.assign(s.reversal_differences.begin() + kDiscardedReversals,
                                s.reversal_differences.end());
  double sum = 0.0;
  for (double d : r.reversal_differences) sum += d;
  r.jnd = sum / static_cast<double>(r.reversal_differences.size());
  return r;
}

}  // namespace phsim::experiment
