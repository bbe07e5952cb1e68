#include "wisa/physchema/prompts.hpp"

#include <array>
#include <string>

#include "wisa/errors.hpp"
#include "wisa/physchema/categories.hpp"

namespace wisa::physchema {

namespace {

constexpr std::array<std::string_view, 9> kRoundNames = {
    "description", "dynamics", "thermodynamics", "optics", "motion", "object_state", "density", "time", "temperature",
};

std::string header(std::string_view caption) {
  std::string s = "You are annotating the physical content of a video. You only see its caption.\n";
  s += "Caption: \"";
  s += caption;
  s += "\"\n\n";
  return s;
}

std::string qualitative(std::string_view caption, Group group, std::string_view question) {
  std::string s = header(caption);
  s += question;
  s += "\nChoose every option that applies from this list and answer with the numbers only, comma separated:\n";
  const auto& g = group_info(group);
  for (int id = g.first_id; id <= g.last_id; ++id) {
    s += std::to_string(id) + ". " + std::string(category(id).name) + "\n";
  }
  if (g.fallback_id) {
    s += "Choose " + std::to_string(*g.fallback_id) + " alone if none of the other options applies.\n";
  } else {
    s += "Choose exactly one option.\n";
  }
  return s;
}

std::string quantitative(std::string_view caption, std::string_view question, std::string_view unit,
                         bool range) {
  std::string s = header(caption);
  s += question;
  s += "\nAnswer in scientific notation as coefficient and exponent, with the unit ";
  s += unit;
  s += range ? ". Give a minimum and a maximum, formatted as: min = c x 10^e " : ". Format: value = c x 10^e ";
  s += unit;
  s += range ? "; max = c x 10^e " + std::string(unit) + "\n" : "\n";
  s += "The coefficient c satisfies 1 <= |c| < 10; write 0 x 10^0 for zero.\n";
  return s;
}

}  // namespace

std::span<const std::string_view> annotation_round_names() { return kRoundNames; }

AnnotationRound parse_round(std::string_view name) {
  for (std::size_t i = 0; i < kRoundNames.size(); ++i) {
    if (kRoundNames[i] == name) return static_cast<AnnotationRound>(i);
  }
  throw UsageError("unknown annotation round '" + std::string(name) + "'");
}

std::string build_annotation_prompt(std::string_view caption, AnnotationRound round) {
  if (caption.empty()) throw UsageError("build_annotation_prompt: empty caption");
  switch (round) {
    case AnnotationRound::Description: {
      std::string s = header(caption);
      s += "Describe the physical principles at work in this scene, the phenomena they produce, and how those "
           "phenomena appear visually over time. Add physical details the caption leaves out. Answer in at most "
           "three sentences.\n";
      return s;
    }
    case AnnotationRound::Dynamics:
      return qualitative(caption, Group::Dynamics, "Which dynamic phenomena are visible in the video?");
    case AnnotationRound::Thermodynamics:
      return qualitative(caption, Group::Thermodynamics, "Which thermodynamic phenomena are visible in the video?");
    case AnnotationRound::Optics:
      return qualitative(caption, Group::Optics, "Which optical phenomena are visible in the video?");
    case AnnotationRound::Motion:
      return qualitative(caption, Group::CameraMotion, "Does the camera move during the shot?");
    case AnnotationRound::ObjectState:
      return qualitative(caption, Group::ObjectState, "How does the state of the moving objects change?");
    case AnnotationRound::Density:
      return quantitative(caption, "Estimate the density of the primary moving entity.", "kg/m^3", false);
    case AnnotationRound::Time:
      return quantitative(caption, "Estimate the time range over which the physical phenomenon takes place.",
                          "seconds", true);
    case AnnotationRound::Temperature:
      return quantitative(caption, "Estimate the temperature range during which the physical phenomenon occurs.",
                          "degrees Celsius", true);
  }
  throw UsageError("unknown annotation round");
}

std::string build_annotation_prompt(std::string_view caption, std::string_view round) {
  return build_annotation_prompt(caption, parse_round(round));
}

}  // namespace wisa::physchema
