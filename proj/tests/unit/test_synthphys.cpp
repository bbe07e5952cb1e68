#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include <unistd.h>

#include "support/detectors.hpp"
#include "wisa/errors.hpp"
#include "wisa/synthphys/dataset.hpp"
#include "wisa/synthphys/scenario.hpp"

using namespace wisa::synthphys;
namespace fs = std::filesystem;
using wisa::testing::bright_centroid;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("wisa_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Scenario fixed(ScenarioKind k) {
  Scenario s;
  s.kind = k;
  return s;
}

}  // namespace

TEST_CASE("kind names round trip and unknown names are rejected") {
  for (auto k : all_kinds()) CHECK(parse_kind(kind_name(k)) == k);
  CHECK(all_kinds().size() == kNumKinds);
  CHECK_THROWS_AS(parse_kind("tornado"), wisa::UsageError);
}

TEST_CASE("every generated annotation passes strict validation") {
  wisa::numcore::Rng rng(5);
  for (auto k : all_kinds())
    for (int i = 0; i < 20; ++i) {
      const auto clip = generate(Scenario::sample(k, rng), 100 + i);
      const auto violations = wisa::physchema::validate(clip.annotation, true);
      INFO(kind_name(k), " ", clip.annotation.caption);
      CHECK(violations.empty());
      CHECK(clip.annotation.qualitative == kind_labels(k));
      CHECK(clip.frames.shape() == wisa::numcore::Shape{8, 16, 16});
      for (double v : clip.frames.data()) REQUIRE((v >= -1.0 && v <= 1.0));
    }
}

TEST_CASE("branch assignment of each kind") {
  using wisa::physchema::Group;
  CHECK(kind_branch(ScenarioKind::Bounce) == Group::Dynamics);
  CHECK(kind_branch(ScenarioKind::Melt) == Group::Thermodynamics);
  CHECK(kind_branch(ScenarioKind::Reflection) == Group::Optics);
  CHECK_FALSE(kind_branch(ScenarioKind::Static).has_value());
  CHECK(kind_labels(ScenarioKind::Melt).test(8));
  CHECK(kind_labels(ScenarioKind::Reflection).test(15));
  CHECK(kind_labels(ScenarioKind::Bounce).test(1));
}

TEST_CASE("degenerate scenarios are rejected") {
  auto s = fixed(ScenarioKind::Bounce);
  s.radius = 0.0;
  CHECK_THROWS_AS(generate(s, 1), wisa::UsageError);
  s = fixed(ScenarioKind::Bounce);
  s.restitution = 1.5;
  CHECK_THROWS_AS(s.validate(), wisa::UsageError);
  s = fixed(ScenarioKind::Pendulum);
  s.period = 0.0;
  CHECK_THROWS_AS(s.validate(), wisa::UsageError);
  s = fixed(ScenarioKind::Static);
  s.width = 2;
  CHECK_THROWS_AS(s.validate(), wisa::UsageError);
}

TEST_CASE("scenario json round trip and path-carrying errors") {
  wisa::numcore::Rng rng(2);
  const auto s = Scenario::sample(ScenarioKind::Pendulum, rng);
  const auto back = scenario_from_json(scenario_to_json(s));
  CHECK(scenario_to_json(back) == scenario_to_json(s));

  auto j = scenario_to_json(s);
  j["params"]["viscosity"] = 3.0;
  try {
    scenario_from_json(j);
    FAIL("expected ParseError");
  } catch (const wisa::ParseError& e) {
    CHECK(e.path() == "$.params.viscosity");
  }
  j = scenario_to_json(s);
  j["params"]["radius"] = "big";
  CHECK_THROWS_AS(scenario_from_json(j), wisa::ParseError);
}

TEST_CASE("generation is a pure function of scenario and seed") {
  wisa::numcore::Rng rng(9);
  for (auto k : all_kinds()) {
    const auto s = Scenario::sample(k, rng);
    const auto a = generate(s, 77), b = generate(s, 77);
    CHECK(a.frames == b.frames);
    CHECK(a.annotation.caption == b.annotation.caption);
  }
}

TEST_CASE("bounce with restitution 1 conserves energy and rebounds at impact speed") {
  auto s = fixed(ScenarioKind::Bounce);
  s.frames = 24;
  s.restitution = 1.0;
  s.gravity = 0.4;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto clip = generate(s, seed);
    const double floor = 16.0 - s.radius;
    // Kinetic plus potential energy (y grows downward).
    const auto energy = [&](const TrackPoint& p) { return 0.5 * p.vy * p.vy - s.gravity * p.y; };
    const double e0 = energy(clip.track.front());
    bool bounced = false;
    for (std::size_t f = 0; f < clip.track.size(); ++f) {
      const auto& p = clip.track[f];
      CHECK(energy(p) == doctest::Approx(e0).epsilon(1e-9));
      CHECK(p.y <= floor + 1e-9);
      CHECK(std::abs(p.vx) == doctest::Approx(s.speed));
      if (f > 0 && p.vy < 0 && clip.track[f - 1].vy > 0) bounced = true;
      // Rendered centroid follows the track away from the walls.
      if (p.x > s.radius + 1 && p.x < 16 - s.radius - 1 && p.y > s.radius + 1 && p.y < floor - 1) {
        const auto [cx, cy] = bright_centroid(clip.frames, f, s.background);
        CHECK(std::abs(cx - p.x) < 0.35);
        CHECK(std::abs(cy - p.y) < 0.35);
      }
    }
    CHECK(bounced);
  }
}

TEST_CASE("bounce with restitution below 1 loses the expected speed at impact") {
  auto s = fixed(ScenarioKind::Bounce);
  s.frames = 16;
  s.restitution = 0.6;
  s.gravity = 0.4;
  const auto clip = generate(s, 3);
  const double floor = 16.0 - s.radius;
  // Frame-to-frame, reconstruct impact speed from the pre-impact state and compare to the post state.
  bool checked = false;
  for (std::size_t f = 1; f < clip.track.size(); ++f) {
    const auto& a = clip.track[f - 1];
    const auto& b = clip.track[f];
    if (!(a.vy > 0 && b.vy < 0)) continue;
    const double v_hit = std::sqrt(a.vy * a.vy + 2 * s.gravity * (floor - a.y));
    const double v_out = std::sqrt(b.vy * b.vy + 2 * s.gravity * (floor - b.y));
    CHECK(v_out == doctest::Approx(s.restitution * v_hit).epsilon(1e-9));
    checked = true;
  }
  CHECK(checked);
}

TEST_CASE("pendulum amplitude decays by exp(-damping * period) per period") {
  auto s = fixed(ScenarioKind::Pendulum);
  s.frames = 24;
  s.period = 6.0;
  s.damping = 0.08;
  s.amplitude = 0.7;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto clip = generate(s, seed);
    const double ratio = std::exp(-s.damping * s.period);
    for (std::size_t f = 0; f + 6 < s.frames; ++f) {
      CHECK(clip.track[f + 6].angle == doctest::Approx(ratio * clip.track[f].angle).epsilon(1e-9));
      // Horizontal offset of the rendered bob from the pivot shrinks between swings.
      const double off0 = bright_centroid(clip.frames, f, s.background).first - 8.0;
      const double off1 = bright_centroid(clip.frames, f + 6, s.background).first - 8.0;
      if (std::abs(off0) > 1.0) CHECK(std::abs(off1) < std::abs(off0));
    }
    double peak_first = 0, peak_last = 0;
    for (std::size_t f = 0; f < 6; ++f) peak_first = std::max(peak_first, std::abs(clip.track[f].angle));
    for (std::size_t f = 18; f < 24; ++f) peak_last = std::max(peak_last, std::abs(clip.track[f].angle));
    CHECK(peak_last < peak_first);
  }
}

TEST_CASE("melt brightness never increases and strictly drops overall") {
  wisa::numcore::Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto s = Scenario::sample(ScenarioKind::Melt, rng);
    const auto clip = generate(s, i);
    for (std::size_t f = 1; f < s.frames; ++f)
      CHECK(wisa::testing::frame_total(clip.frames, f) <= wisa::testing::frame_total(clip.frames, f - 1) + 1e-9);
    CHECK(wisa::testing::frame_total(clip.frames, s.frames - 1) < wisa::testing::frame_total(clip.frames, 0) - 1.0);
    CHECK(clip.annotation.qualitative.test(8));
  }
}

TEST_CASE("reflection bottom half mirrors the top half with the set attenuation") {
  auto s = fixed(ScenarioKind::Reflection);
  s.attenuation = 0.4;
  const auto clip = generate(s, 8);
  const auto fit = wisa::testing::mirror_fit(clip.frames);
  CHECK(fit.gain == doctest::Approx(0.4).epsilon(1e-5));
  CHECK(fit.residual < 1e-8);
  CHECK(wisa::testing::motion_energy(clip.frames) == 0.0);
}

TEST_CASE("static clips are constant") {
  const auto clip = generate(fixed(ScenarioKind::Static), 1);
  for (double v : clip.frames.data()) CHECK(v == -0.8);
}

TEST_CASE("pixel detectors agree with the labels on 200 sampled clips") {
  auto spec = DatasetSpec::defaults(200, 31);
  spec.mixture.back().weight = 0.06;  // include static clips
  spec.mixture[5].weight -= 0.06;
  const auto plan = plan_dataset(spec);
  std::size_t motion_agree = 0, mirror_agree = 0;
  for (const auto& r : plan) {
    const auto clip = generate(r.scenario, r.seed);
    const bool moving = wisa::testing::motion_energy(clip.frames) > 1e-6;
    const bool mirrored = wisa::testing::looks_mirrored(clip.frames);
    INFO(r.id, " ", kind_name(r.kind));
    CHECK(moving == wisa::testing::labels_imply_motion(clip.annotation.qualitative));
    CHECK(mirrored == clip.annotation.qualitative.test(15));
    motion_agree += moving == wisa::testing::labels_imply_motion(clip.annotation.qualitative);
    mirror_agree += mirrored == clip.annotation.qualitative.test(15);
  }
  CHECK(motion_agree == 200);
  CHECK(mirror_agree == 200);
}

TEST_CASE("default mixture reproduces the branch proportions on 10k clips") {
  const auto plan = plan_dataset(DatasetSpec::defaults(10000, 4));
  std::map<std::string, double> frac;
  for (const auto& r : plan) {
    const auto b = kind_branch(r.kind);
    frac[b ? std::string(wisa::physchema::group_name(*b)) : "none"] += 1e-4;
  }
  CHECK(std::abs(frac[std::string(wisa::physchema::group_name(wisa::physchema::Group::Dynamics))] - 0.47) <= 0.02);
  CHECK(std::abs(frac[std::string(wisa::physchema::group_name(wisa::physchema::Group::Thermodynamics))] - 0.24) <=
        0.02);
  CHECK(std::abs(frac[std::string(wisa::physchema::group_name(wisa::physchema::Group::Optics))] - 0.29) <= 0.02);
  CHECK(frac["none"] == 0.0);
}

TEST_CASE("mixture validation and json") {
  auto spec = DatasetSpec::defaults(10, 1);
  spec.mixture[0].weight += 0.1;
  CHECK_THROWS_AS(spec.validate(), wisa::UsageError);
  spec = DatasetSpec::defaults(10, 1);
  spec.mixture[0].weight = -0.1;
  spec.mixture[1].weight += 0.1 + 0.47 / 3;
  CHECK_THROWS_AS(spec.validate(), wisa::UsageError);

  const auto j = nlohmann::json::parse(R"([{"kind": "bounce", "weight": 0.5},
      {"kind": "melt", "weight": 0.5, "params": {"melt_rate": 0.2}}])");
  const auto m = mixture_from_json(j);
  REQUIRE(m.size() == 2);
  CHECK(m[1].fixed.has_value());
  CHECK(m[1].fixed->melt_rate == 0.2);
  CHECK(mixture_from_json(mixture_to_json(m)).size() == 2);

  const auto bad = nlohmann::json::parse(R"([{"kind": "melt", "weight": 1, "params": {"melt_speed": 1}}])");
  try {
    mixture_from_json(bad);
    FAIL("expected ParseError");
  } catch (const wisa::ParseError& e) {
    CHECK(e.path() == "$[0].params.melt_speed");
  }
}

TEST_CASE("dataset directory is byte-identical across runs and thread counts") {
  TempDir a("ds_a"), b("ds_b");
  const auto spec = DatasetSpec::defaults(40, 12);
  ::setenv("WISA_LAB_THREADS", "1", 1);
  make_dataset(spec, a.path);
  ::setenv("WISA_LAB_THREADS", "3", 1);
  make_dataset(spec, b.path);
  ::unsetenv("WISA_LAB_THREADS");
  const auto ta = tree(a.path), tb = tree(b.path);
  CHECK(ta.size() == 81);
  CHECK(ta == tb);

  const auto ds = Dataset::open(a.path);
  CHECK(ds.records().size() == 40);
  CHECK_NOTHROW(ds.check_disjoint());
  const auto plan = plan_dataset(spec);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto clip = generate(plan[i].scenario, plan[i].seed);
    const auto stored = ds.clip(plan[i].id);
    REQUIRE(stored.shape() == clip.frames.shape());
    for (std::size_t k = 0; k < stored.size(); ++k) CHECK(std::abs(stored[k] - clip.frames[k]) < 1e-6);
    CHECK(ds.annotation(plan[i].id).caption == clip.annotation.caption);
  }
  const auto stats = compute_stats(ds);
  CHECK(stats.total == 40);
  CHECK(stats.by_split.at("train") + stats.by_split.at("val") == 40);
}

TEST_CASE("empty dataset writes an empty manifest") {
  TempDir d("ds_empty");
  make_dataset(DatasetSpec::defaults(0, 1), d.path);
  const auto ds = Dataset::open(d.path);
  CHECK(ds.records().empty());
  CHECK(ds.manifest()["clips"].empty());
}

TEST_CASE("unwritable output and leaked splits raise") {
  TempDir d("ds_err");
  {
    std::ofstream blocker(d.path / "file");
    blocker << "x";
  }
  CHECK_THROWS_AS(make_dataset(DatasetSpec::defaults(3, 1), d.path / "file" / "sub"), wisa::IoError);

  make_dataset(DatasetSpec::defaults(4, 1), d.path / "ok");
  auto manifest = nlohmann::json::parse(slurp(d.path / "ok" / "manifest.json"));
  auto dup = manifest["clips"][0];
  dup["split"] = dup["split"] == "train" ? "val" : "train";
  manifest["clips"].push_back(dup);
  {
    std::ofstream out(d.path / "ok" / "manifest.json");
    out << manifest.dump();
  }
  CHECK_THROWS_AS(Dataset::open(d.path / "ok").check_disjoint(), wisa::DatasetError);
  CHECK_THROWS_AS(Dataset::open(d.path / "missing"), wisa::IoError);
}

TEST_CASE("clip file round trip and corrupt input") {
  TempDir d("clipio");
  wisa::numcore::Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.25 * static_cast<double>(i) - 1.0;
  write_clip(d.path / "a.clip", t);
  CHECK(read_clip(d.path / "a.clip") == t);
  {
    std::ofstream out(d.path / "bad.clip", std::ios::binary);
    out << "nope";
  }
  CHECK_THROWS_AS(read_clip(d.path / "bad.clip"), wisa::IoError);
}
