#include "wisa/synthphys/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "wisa/errors.hpp"

namespace wisa::synthphys {

namespace {

using physchema::Group;

struct KindInfo {
  ScenarioKind kind;
  const char* name;
  std::optional<Group> branch;
  std::vector<int> labels;
  // density kg/m^3, time range s, temperature range deg C
  double density, t_min, t_max, temp_min, temp_max;
  std::array<const char*, 2> captions;
  const char* description;
};

const KindInfo kKinds[] = {
    {ScenarioKind::Bounce, "bounce", Group::Dynamics, {1, 2, 14, 20, 22, 29}, 1100.0, 0.5, 2.0, 20.0, 20.0,
     {"a {} ball drops and bounces on the floor", "a {} ball bouncing off the ground"},
     "The ball accelerates downward under gravity, collides with the floor and rebounds as a rigid body."},
    {ScenarioKind::Pendulum, "pendulum", Group::Dynamics, {2, 14, 20, 22, 29}, 7850.0, 1.0, 10.0, 20.0, 20.0,
     {"a {} pendulum swings back and forth", "a {} weight swinging on a string"},
     "The bob moves as a rigid body along an arc and friction removes energy, so the amplitude of the swing "
     "decreases over time."},
    {ScenarioKind::Flow, "flow", Group::Dynamics, {4, 14, 20, 22, 29}, 1000.0, 1.0, 5.0, 15.0, 25.0,
     {"a {} stream of water flows across the scene", "{} liquid flowing sideways"},
     "The liquid is carried along by the flow and moves steadily in one direction."},
    {ScenarioKind::Melt, "melt", Group::Thermodynamics, {7, 8, 20, 22, 29}, 917.0, 60.0, 600.0, 0.0, 25.0,
     {"a {} block of ice melting on the floor", "{} ice slowly melts away"},
     "Heat from the warm surroundings melts the ice, so the solid region shrinks as it turns into liquid."},
    {ScenarioKind::CombustionFlicker, "combustion_flicker", Group::Thermodynamics, {7, 13, 20, 22, 29}, 0.3, 1.0,
     10.0, 600.0, 1200.0, {"a {} flame flickering", "a {} fire burning at the bottom"},
     "The fuel burns and the flame flickers as hot gases rise and the rate of combustion changes."},
    {ScenarioKind::Reflection, "reflection", Group::Optics, {7, 14, 15, 22, 29}, 2500.0, 1.0, 3.0, 20.0, 20.0,
     {"a {} ball reflected in a still mirror", "a {} object and its reflection"},
     "Light from the object is reflected by the mirror surface, forming a dimmer inverted image below it."},
    {ScenarioKind::Static, "static", std::nullopt, {7, 14, 20, 22, 29}, 1.2, 1.0, 1.0, 20.0, 20.0,
     {"an empty {} background", "a {} still scene with nothing happening"},
     "Nothing moves and no physical change happens in the scene."},
};

const char* const kAdjectives[] = {"small", "bright", "white", "pale"};

const KindInfo& info(ScenarioKind k) {
  for (const auto& i : kKinds)
    if (i.kind == k) return i;
  throw UsageError("unknown scenario kind");
}

std::string fill_template(const char* tmpl, const char* word) {
  std::string s(tmpl);
  const auto pos = s.find("{}");
  if (pos != std::string::npos) s.replace(pos, 2, word);
  return s;
}

// Antialiased disc: 1 inside, 0 outside, linear over one pixel at the rim.
double disc(double px, double py, double cx, double cy, double r) {
  const double d = std::hypot(px - cx, py - cy);
  return std::clamp(r + 0.5 - d, 0.0, 1.0);
}

double gauss(double px, double py, double cx, double cy, double sx, double sy) {
  const double dx = (px - cx) / sx, dy = (py - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

class Canvas {
 public:
  explicit Canvas(const Scenario& s) : s_(s), t_({s.frames, s.height, s.width}, s.background) {}

  // Paints intensity coverage(px, py) in [0, 1] over frame f, keeping the brighter value.
  template <class F>
  void paint(std::size_t f, F&& coverage) {
    for (std::size_t r = 0; r < s_.height; ++r)
      for (std::size_t c = 0; c < s_.width; ++c) {
        const double cov = coverage(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5);
        double& v = t_[(f * s_.height + r) * s_.width + c];
        v = std::max(v, s_.background + (s_.brightness - s_.background) * cov);
      }
  }
  Tensor& tensor() { return t_; }

 private:
  const Scenario& s_;
  Tensor t_;
};

double W(const Scenario& s) { return static_cast<double>(s.width); }
double H(const Scenario& s) { return static_cast<double>(s.height); }

void render_bounce(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double r = s.radius, floor = H(s) - r;
  double x = rng.uniform(r, std::max(r, W(s) - r));
  double y = std::max(r, floor - rng.uniform(3.0, 8.0));
  double vx = s.speed * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  double vy = rng.uniform(0.0, 1.0);
  const double g = s.gravity;
  for (std::size_t f = 0; f < s.frames; ++f) {
    if (f > 0) {
      // Horizontal: uniform motion folded at the side walls.
      x += vx;
      for (int k = 0; k < 8 && (x < r || x > W(s) - r); ++k) {
        if (x > W(s) - r) x = 2 * (W(s) - r) - x;
        if (x < r) x = 2 * r - x;
        vx = -vx;
      }
      // Vertical: exact parabola with reflection at the floor.
      double rem = 1.0;
      for (int k = 0; k < 64 && rem > 0.0; ++k) {
        const double y_new = y + vy * rem + 0.5 * g * rem * rem;
        if (y_new <= floor) {
          y = y_new;
          vy += g * rem;
          break;
        }
        const double a = 0.5 * g, b = vy, c = y - floor;
        double tau = a > 0.0 ? (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a) : -c / b;
        tau = std::clamp(tau, 0.0, rem);
        const double v_hit = vy + g * tau;
        rem -= tau;
        y = floor;
        if (v_hit < 1e-12) {
          vy = 0.0;
          break;
        }
        vy = -s.restitution * v_hit;
      }
    }
    track.push_back({x, y, vx, vy, 0.0, r});
    cv.paint(f, [&](double px, double py) { return disc(px, py, x, y, r); });
  }
}

void render_pendulum(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double r = s.radius;
  const double px0 = W(s) / 2.0, py0 = 0.5;
  const double reach_y = H(s) - r - py0;
  const double reach_x = s.amplitude > 0.0 ? (W(s) / 2.0 - r) / std::sin(s.amplitude) : reach_y;
  const double len = std::max(r, std::min(reach_y, reach_x) * rng.uniform(0.8, 1.0));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double omega = 2.0 * std::numbers::pi / s.period;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const double t = static_cast<double>(f);
    const double env = s.amplitude * std::exp(-s.damping * t);
    const double theta = env * std::cos(omega * t + phase);
    const double dtheta = env * (-s.damping * std::cos(omega * t + phase) - omega * std::sin(omega * t + phase));
    const double x = px0 + len * std::sin(theta), y = py0 + len * std::cos(theta);
    track.push_back({x, y, len * std::cos(theta) * dtheta, -len * std::sin(theta) * dtheta, theta, r});
    cv.paint(f, [&](double px, double py) { return disc(px, py, x, y, r); });
  }
}

void render_flow(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double sx = 1.5 * s.radius, sy = 0.6 * s.radius;
  const double span = static_cast<double>(s.frames - 1);
  const double margin = 1.5;
  const double speed = span > 0.0 ? std::min(s.speed, std::max(0.0, W(s) - 2 * margin) / span) : s.speed;
  const double travel = speed * span;
  const double dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double x0 = dir > 0 ? rng.uniform(margin, W(s) - margin - travel) : rng.uniform(margin + travel, W(s) - margin);
  const double band = rng.bernoulli(0.5) ? 0.25 : 0.75;
  const double cy = band * H(s) + rng.uniform(-0.5, 0.5);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const double x = x0 + dir * speed * static_cast<double>(f);
    track.push_back({x, cy, dir * speed, 0.0, 0.0, s.radius});
    cv.paint(f, [&](double px, double py) { return gauss(px, py, x, cy, sx, sy); });
  }
}

void render_melt(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double r0 = s.radius;
  const double cx = rng.uniform(std::min(r0, W(s) / 2), std::max(W(s) - r0, W(s) / 2));
  const double cy = H(s) - r0;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const double r = std::max(0.0, r0 - s.melt_rate * static_cast<double>(f));
    track.push_back({cx, cy, 0.0, 0.0, 0.0, r});
    cv.paint(f, [&](double px, double py) { return disc(px, py, cx, cy, r); });
  }
}

void render_flame(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double cx = rng.uniform(W(s) / 3.0, 2.0 * W(s) / 3.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const double level = 1.0 - s.flicker * rng.uniform();
    const double stretch = 1.0 + 0.4 * rng.uniform();
    const double sy = s.radius * stretch, sx = 0.7 * s.radius;
    const double cy = H(s) - 1.0 - 1.2 * sy;
    track.push_back({cx, cy, 0.0, 0.0, 0.0, level});
    cv.paint(f, [&](double px, double py) { return level * gauss(px, py, cx, cy, sx, sy); });
  }
}

void render_reflection(const Scenario& s, Rng& rng, Canvas& cv, std::vector<TrackPoint>& track) {
  const double r = s.radius;
  const double half = std::floor(H(s) / 2.0);
  const double cx = rng.uniform(std::min(r, W(s) / 2), std::max(W(s) - r, W(s) / 2));
  const double lo = std::min(r + 0.5, half / 2), hi = std::max(lo, half - r - 0.5);
  const double cy = rng.uniform(lo, hi);
  Tensor& t = cv.tensor();
  const std::size_t top_rows = s.height / 2;
  for (std::size_t f = 0; f < s.frames; ++f) {
    track.push_back({cx, cy, 0.0, 0.0, 0.0, r});
    for (std::size_t row = 0; row < top_rows; ++row)
      for (std::size_t c = 0; c < s.width; ++c) {
        const double cov = disc(static_cast<double>(c) + 0.5, static_cast<double>(row) + 0.5, cx, cy, r);
        const double v = s.background + (s.brightness - s.background) * cov;
        t[(f * s.height + row) * s.width + c] = v;
        t[(f * s.height + (s.height - 1 - row)) * s.width + c] = s.background + s.attenuation * (v - s.background);
      }
  }
}

}  // namespace

std::string_view kind_name(ScenarioKind k) { return info(k).name; }

ScenarioKind parse_kind(std::string_view name) {
  for (const auto& i : kKinds)
    if (name == i.name) return i.kind;
  throw UsageError("unknown scenario kind '" + std::string(name) + "'");
}

const std::vector<ScenarioKind>& all_kinds() {
  static const std::vector<ScenarioKind> kinds = [] {
    std::vector<ScenarioKind> v;
    for (const auto& i : kKinds) v.push_back(i.kind);
    return v;
  }();
  return kinds;
}

std::optional<physchema::Group> kind_branch(ScenarioKind k) { return info(k).branch; }

physchema::CategoryVector kind_labels(ScenarioKind k) {
  const auto& l = info(k).labels;
  return physchema::CategoryVector::from_ids(l);
}

physchema::QuantitativeProperties kind_quantities(ScenarioKind k) {
  const auto& i = info(k);
  return physchema::QuantitativeProperties::from_values(i.density, i.t_min, i.t_max, i.temp_min, i.temp_max);
}

void Scenario::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("scenario: " + what);
  };
  need(frames >= 1, "frames must be at least 1");
  need(height >= 4 && width >= 4, "height and width must be at least 4");
  need(radius > 0.0 && std::isfinite(radius), "radius must be positive");
  need(2.0 * radius < static_cast<double>(std::min(height, width)), "object does not fit in the frame");
  need(background >= -1.0 && background <= 1.0 && brightness >= -1.0 && brightness <= 1.0,
       "intensities must lie in [-1, 1]");
  need(gravity >= 0.0, "gravity must be nonnegative");
  need(restitution >= 0.0 && restitution <= 1.0, "restitution must lie in [0, 1]");
  need(speed >= 0.0, "speed must be nonnegative");
  need(period > 0.0, "period must be positive");
  need(amplitude >= 0.0 && amplitude <= std::numbers::pi / 2, "amplitude must lie in [0, pi/2]");
  need(damping >= 0.0, "damping must be nonnegative");
  need(melt_rate >= 0.0, "melt_rate must be nonnegative");
  need(flicker >= 0.0 && flicker <= 1.0, "flicker must lie in [0, 1]");
  need(attenuation > 0.0 && attenuation <= 1.0, "attenuation must lie in (0, 1]");
}

Scenario Scenario::sample(ScenarioKind kind, Rng& rng, std::size_t frames, std::size_t height, std::size_t width) {
  Scenario s;
  s.kind = kind;
  s.frames = frames;
  s.height = height;
  s.width = width;
  const double span = std::max<double>(1.0, static_cast<double>(frames) - 1.0);
  switch (kind) {
    case ScenarioKind::Bounce:
      s.radius = rng.uniform(1.5, 2.5);
      s.gravity = rng.uniform(0.25, 0.45);
      s.restitution = rng.uniform(0.7, 1.0);
      s.speed = rng.uniform(0.3, 1.2);
      break;
    case ScenarioKind::Pendulum:
      s.radius = rng.uniform(1.2, 2.0);
      s.period = rng.uniform(6.0, 12.0);
      s.amplitude = rng.uniform(0.4, 0.9);
      s.damping = rng.uniform(0.02, 0.1);
      break;
    case ScenarioKind::Flow:
      s.radius = rng.uniform(1.5, 2.5);
      s.speed = rng.uniform(0.6, 1.2);
      break;
    case ScenarioKind::Melt:
      s.radius = rng.uniform(3.5, 5.0);
      s.melt_rate = rng.uniform(0.15, std::max(0.15, (s.radius - 0.8) / span));
      break;
    case ScenarioKind::CombustionFlicker:
      s.radius = rng.uniform(1.5, 2.5);
      s.flicker = rng.uniform(0.3, 0.7);
      break;
    case ScenarioKind::Reflection:
      s.radius = rng.uniform(1.5, 2.5);
      s.attenuation = rng.uniform(0.3, 0.7);
      break;
    case ScenarioKind::Static:
      s.background = rng.uniform(-0.9, -0.5);
      break;
  }
  const double fit = 0.45 * static_cast<double>(std::min(height, width));
  s.radius = std::min(s.radius, fit);
  return s;
}

#define WISA_SCENARIO_PARAMS(X)                                                                                  \
  X(radius) X(background) X(brightness) X(gravity) X(restitution) X(speed) X(period) X(amplitude) X(damping) \
      X(melt_rate) X(flicker) X(attenuation)

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json p;
#define X(name) p[#name] = s.name;
  WISA_SCENARIO_PARAMS(X)
#undef X
  p["frames"] = s.frames;
  p["height"] = s.height;
  p["width"] = s.width;
  return {{"kind", kind_name(s.kind)}, {"params", p}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ParseError("$.kind", "scenario needs a string kind");
  Scenario s;
  s.kind = parse_kind(j["kind"].get<std::string>());
  if (j.contains("params")) {
    const auto& p = j["params"];
    if (!p.is_object()) throw ParseError("$.params", "expected an object");
    for (const auto& [key, value] : p.items()) {
      const std::string where = "$.params." + key;
      if (key == "frames" || key == "height" || key == "width") {
        if (!value.is_number_unsigned()) throw ParseError(where, "expected a nonnegative integer");
        (key == "frames" ? s.frames : key == "height" ? s.height : s.width) = value.get<std::size_t>();
        continue;
      }
      if (!value.is_number()) throw ParseError(where, "expected a number");
      bool known = false;
#define X(name)               \
  if (key == #name) {         \
    s.name = value.get<double>(); \
    known = true;             \
  }
      WISA_SCENARIO_PARAMS(X)
#undef X
      if (!known) throw ParseError(where, "unknown parameter");
    }
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "kind" && key != "params" && key != "weight") throw ParseError("$." + key, "unknown key");
  }
  s.validate();
  return s;
}

#undef WISA_SCENARIO_PARAMS

SyntheticClip generate(const Scenario& s, std::uint64_t seed) {
  s.validate();
  Rng rng(seed);
  SyntheticClip clip;
  clip.seed = seed;
  clip.kind = s.kind;
  Canvas cv(s);
  switch (s.kind) {
    case ScenarioKind::Bounce: render_bounce(s, rng, cv, clip.track); break;
    case ScenarioKind::Pendulum: render_pendulum(s, rng, cv, clip.track); break;
    case ScenarioKind::Flow: render_flow(s, rng, cv, clip.track); break;
    case ScenarioKind::Melt: render_melt(s, rng, cv, clip.track); break;
    case ScenarioKind::CombustionFlicker: render_flame(s, rng, cv, clip.track); break;
    case ScenarioKind::Reflection: render_reflection(s, rng, cv, clip.track); break;
    case ScenarioKind::Static: break;
  }
  clip.frames = std::move(cv.tensor());

  const auto& i = info(s.kind);
  const char* adjective = kAdjectives[rng.below(std::size(kAdjectives))];
  clip.annotation.caption = fill_template(i.captions[rng.below(2)], adjective);
  clip.annotation.physical_description = i.description;
  clip.annotation.qualitative = kind_labels(s.kind);
  clip.annotation.quantitative = kind_quantities(s.kind);
  clip.annotation.strict = true;
  return clip;
}

}  // namespace wisa::synthphys
