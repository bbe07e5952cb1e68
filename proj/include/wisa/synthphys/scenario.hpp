#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wisa/numcore/random.hpp"
#include "wisa/numcore/tensor.hpp"
#include "wisa/physchema/annotation.hpp"
#include "wisa/physchema/categories.hpp"

namespace wisa::synthphys {

using numcore::Rng;
using numcore::Tensor;

enum class ScenarioKind { Bounce, Pendulum, Flow, Melt, CombustionFlicker, Reflection, Static };

inline constexpr std::size_t kNumKinds = 7;

std::string_view kind_name(ScenarioKind k);
ScenarioKind parse_kind(std::string_view name);  // throws UsageError
const std::vector<ScenarioKind>& all_kinds();

// Physics branch a kind illustrates; Static has none.
std::optional<physchema::Group> kind_branch(ScenarioKind k);
// Ground-truth qualitative labels of a kind.
physchema::CategoryVector kind_labels(ScenarioKind k);
// Quantitative annotation constants of a kind (see README table).
physchema::QuantitativeProperties kind_quantities(ScenarioKind k);

/// Rendering parameters. Lengths in pixels, times in frames, intensities in [-1, 1].
/// Each kind reads the subset it needs.
struct Scenario {
  ScenarioKind kind = ScenarioKind::Static;
  std::size_t frames = 8, height = 16, width = 16;

  double radius = 2.0;       // disc / bob / blob size
  double background = -0.8;
  double brightness = 0.8;

  double gravity = 0.35;     // bounce, px / frame^2
  double restitution = 1.0;  // bounce, fraction of normal speed kept at the floor
  double speed = 1.0;        // flow advection, bounce horizontal speed
  double period = 8.0;       // pendulum period
  double amplitude = 0.6;    // pendulum amplitude, radians
  double damping = 0.05;     // pendulum amplitude decay rate per frame
  double melt_rate = 0.3;    // melt radius lost per frame
  double flicker = 0.5;      // combustion brightness modulation depth
  double attenuation = 0.5;  // reflection: mirrored image keeps this fraction of contrast

  void validate() const;  // throws UsageError on degenerate values

  // Physical parameters drawn from per-kind ranges for the given geometry.
  static Scenario sample(ScenarioKind kind, Rng& rng, std::size_t frames = 8, std::size_t height = 16,
                         std::size_t width = 16);
};

// {kind, params: {...}} with only the numeric parameters under params; unknown names are rejected.
nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

// Object state per frame, for checks against the rendered pixels.
struct TrackPoint {
  double x = 0, y = 0;    // object centre, pixels
  double vx = 0, vy = 0;  // pixels / frame
  double angle = 0;       // pendulum angle
  double size = 0;        // radius or intensity scale
};

struct SyntheticClip {
  Tensor frames;  // (frames, height, width) in [-1, 1]
  physchema::PhysicalAnnotation annotation;
  std::uint64_t seed = 0;
  ScenarioKind kind = ScenarioKind::Static;
  std::vector<TrackPoint> track;
};

/// Renders one clip. Pure function of (scenario, seed): the seed picks the
/// initial state, flicker pattern and caption wording.
SyntheticClip generate(const Scenario& s, std::uint64_t seed);

}  // namespace wisa::synthphys
