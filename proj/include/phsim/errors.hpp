#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace phsim {

/// Bad argument to a total-looking function (non-positive mass, t < 0, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong lifecycle state (update after finish, ...).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input file parsed but violates an invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file could not be parsed. `where` names the line or field.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// A NaN or Inf showed up in body state during a step.
class SimulationDiverged : public std::runtime_error {
 public:
  explicit SimulationDiverged(std::uint32_t body_id)
      : std::runtime_error("simulation diverged: body " + std::to_string(body_id) +
                           " has non-finite state"),
        body_id_(body_id) {}

  std::uint32_t body_id() const noexcept { return body_id_; }

 private:
  std::uint32_t body_id_;
};

}  // namespace phsim
