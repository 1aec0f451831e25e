#pragma once

// Synthetic participant. Perceives the peak clone displacement of each object
// with a visibility floor and a Weber-fraction discrimination threshold.

#include <phsim/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace phsim::experiment {

struct ObserverModel {
  double displacement_floor = 0.001;  // [m] displacements below look like none
  double weber_fraction = 0.2;
  double noise_sd = 0.0;  // log-normal multiplicative noise; 0 = deterministic
  std::uint64_t seed = 0;

  void validate() const {
    if (!(displacement_floor >= 0.0)) throw InvalidArgument("observer floor must be >= 0");
    if (!(weber_fraction > 0.0 && weber_fraction < 1.0))
      throw InvalidArgument("observer weber fraction must lie in (0, 1)");
    if (!(noise_sd >= 0.0)) throw InvalidArgument("observer noise must be >= 0");
  }
  bool operator==(const ObserverModel&) const = default;
};

enum class PairAnswer { HeavierIsA, HeavierIsB, NoDifference };

inline std::string_view to_string(PairAnswer a) {
  switch (a) {
    case PairAnswer::HeavierIsA: return "heavier-is-a";
    case PairAnswer::HeavierIsB: return "heavier-is-b";
    case PairAnswer::NoDifference: break;
  }
  return "no-difference";
}

/// Compares two displacement signals. Consumes random numbers only when
/// noise_sd > 0.
inline PairAnswer observer_perceive_pair(double s_a, double s_b, const ObserverModel& model,
                                         std::mt19937_64& rng) {
  if (s_a < 0.0 || s_b < 0.0) throw InvalidArgument("observer signals must be >= 0");
  double a = std::max(s_a, model.displacement_floor);
  double b = std::max(s_b, model.displacement_floor);
  if (model.noise_sd > 0.0) {
    std::normal_distribution<double> n(0.0, model.noise_sd);
    a *= std::exp(n(rng));
    b *= std::exp(n(rng));
  }
  const double hi = std::max(a, b);
  if (hi <= 0.0) return PairAnswer::NoDifference;
  if (std::abs(a - b) / hi <= model.weber_fraction) return PairAnswer::NoDifference;
  return a > b ? PairAnswer::HeavierIsA : PairAnswer::HeavierIsB;
}

}  // namespace phsim::experiment
