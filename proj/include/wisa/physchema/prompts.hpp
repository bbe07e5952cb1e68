#pragma once

#include <span>
#include <string>
#include <string_view>

namespace wisa::physchema {

enum class AnnotationRound {
  Description,
  Dynamics,
  Thermodynamics,
  Optics,
  Motion,
  ObjectState,
  Density,
  Time,
  Temperature,
};

// Round names as accepted by parse_round(): description, dynamics, ..., temperature.
std::span<const std::string_view> annotation_round_names();
// Throws UsageError for an unknown name.
AnnotationRound parse_round(std::string_view name);

/// Text prompt for one round of caption-based annotation.
///
/// Qualitative rounds list the closed set of allowed category names for their
/// group; quantitative rounds ask for a value in scientific notation with a
/// fixed unit. Deterministic in (caption, round).
std::string build_annotation_prompt(std::string_view caption, AnnotationRound round);
std::string build_annotation_prompt(std::string_view caption, std::string_view round);

}  // namespace wisa::physchema
