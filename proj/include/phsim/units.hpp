#pragma once

// Command-line quantities with explicit unit suffixes, converted to SI.

#include <phsim/errors.hpp>

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace phsim::units {

enum class Dimension { Mass, Length };

namespace detail {

struct Suffix {
  std::string_view text;
  double factor;
};

inline constexpr Suffix kMass[] = {{"kg", 1.0}, {"g", 1e-3}};
inline constexpr Suffix kLength[] = {{"mm", 1e-3}, {"cm", 1e-2}, {"m", 1.0}};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline double parse_number(std::string_view s) {
  s = detail::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size())
    throw InvalidArgument("not a number: '" + std::string(s) + "'");
  return v;
}

/// "15g" -> 0.015, "2cm" -> 0.02. A suffix is required.
inline double parse_quantity(std::string_view text, Dimension dim) {
  const std::string_view s = detail::trim(text);
  const auto try_suffixes = [&](const auto& table) -> std::optional<double> {
    for (const auto& sfx : table) {
      if (s.size() > sfx.text.size() && s.substr(s.size() - sfx.text.size()) == sfx.text) {
        const std::string_view num = s.substr(0, s.size() - sfx.text.size());
        const char last = num.back();
        if ((last >= '0' && last <= '9') || last == '.' || last == ' ') return parse_number(num) * sfx.factor;
      }
    }
    return std::nullopt;
  };
  const auto v = dim == Dimension::Mass ? try_suffixes(detail::kMass) : try_suffixes(detail::kLength);
  if (!v)
    throw InvalidArgument("'" + std::string(s) + "' needs a unit suffix (" +
                          (dim == Dimension::Mass ? "g or kg" : "mm, cm or m") + ")");
  return *v;
}

inline double parse_mass(std::string_view s) { return parse_quantity(s, Dimension::Mass); }
inline double parse_length(std::string_view s) { return parse_quantity(s, Dimension::Length); }

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// "15g,200g,800g" -> {0.015, 0.2, 0.8}
inline std::vector<double> parse_mass_list(std::string_view s) {
  std::vector<double> out;
  for (auto part : split(s, ',')) out.push_back(parse_mass(part));
  return out;
}

}  // namespace phsim::units
