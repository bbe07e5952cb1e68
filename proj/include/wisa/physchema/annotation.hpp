#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wisa/physchema/categories.hpp"

namespace wisa::physchema {

/// value = coefficient * 10^exponent, with |coefficient| in [1, 10) or the canonical zero (0, 0).
struct SciNotation {
  double coefficient = 0.0;
  int exponent = 0;

  double value() const;
  friend bool operator==(const SciNotation&, const SciNotation&) = default;
};

SciNotation encode_scientific(double value);
double decode_scientific(const SciNotation& s);

struct Range {
  SciNotation min;
  SciNotation max;
  friend bool operator==(const Range&, const Range&) = default;
};

struct QuantitativeProperties {
  SciNotation density;        // kg/m^3, primary moving entity
  Range time_range;           // seconds
  Range temperature_range;    // degrees Celsius

  // (c, e) of density, time min, time max, temperature min, temperature max.
  std::array<double, 10> flatten() const;

  static QuantitativeProperties from_values(double density, double t_min, double t_max, double temp_min,
                                            double temp_max);
  friend bool operator==(const QuantitativeProperties&, const QuantitativeProperties&) = default;
};

struct PhysicalAnnotation {
  std::string caption;
  std::string physical_description;
  CategoryVector qualitative;
  QuantitativeProperties quantitative;
  bool strict = true;

  friend bool operator==(const PhysicalAnnotation&, const PhysicalAnnotation&) = default;
};

struct Violation {
  std::string field;  // JSON-style path of the offending field
  std::string rule;
  std::vector<int> ids;

  std::string message() const;
};

/// Checks the annotation invariants.
///
/// Both modes: nonempty caption, canonical scientific notation, density >= 0,
/// range minimum <= maximum. Strict mode adds the group rules: every group has
/// an active entry, a group's fallback is exclusive with the rest of the group,
/// and exactly one camera-motion entry is active.
std::vector<Violation> validate(const PhysicalAnnotation& a, bool strict);

nlohmann::json to_json(const PhysicalAnnotation& a);
// Throws ParseError naming the JSON path of the first problem.
PhysicalAnnotation from_json(const nlohmann::json& doc);

std::string serialize(const PhysicalAnnotation& a);
PhysicalAnnotation parse(std::string_view text);

}  // namespace wisa::physchema
