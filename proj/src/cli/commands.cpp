#include "wisa/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "wisa/errors.hpp"
#include "wisa/physchema/annotation.hpp"
#include "wisa/trainer/evaluate.hpp"

namespace wisa::cli {

namespace {

struct ErrorList {
  std::vector<std::pair<std::string, std::string>> items;

  template <class F>
  void guard(F&& f) {
    try {
      f();
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      items.emplace_back(e.path(), msg.substr(std::min(msg.size(), e.path().size() + 2)));
    }
  }
  void add(std::string path, std::string what) { items.emplace_back(std::move(path), std::move(what)); }

  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = std::to_string(items.size()) + " config problem(s)";
    for (const auto& [p, w] : items) msg += "\n  " + p + ": " + w;
    throw ParseError(items.front().first, msg);
  }
};

// Re-roots a ParseError thrown by a section parser that reports paths from "$".
template <class F>
void in_section(const std::string& root, F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    std::string sub = e.path();
    if (sub.rfind("$", 0) == 0) sub = sub.substr(1);
    throw ParseError(root + sub, msg.substr(std::min(msg.size(), e.path().size() + 2)));
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() || base.empty() ? p : base / p; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

synthphys::DatasetSpec RunConfig::dataset_spec() const {
  auto spec = synthphys::DatasetSpec::defaults(data_count, seed);
  if (!mixture.empty()) spec.mixture = mixture;
  spec.val_fraction = val_fraction;
  spec.frames = model.frames;
  spec.height = model.height;
  spec.width = model.width;
  return spec;
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ParseError("$", "run config must be an object");
  RunConfig c;
  ErrorList errors;
  for (const auto& [key, value] : j.items()) {
    const std::string where = "$." + key;
    if (key == "seed") {
      if (value.is_number_unsigned()) c.seed = value.get<std::uint64_t>();
      else errors.add(where, "expected a nonnegative integer");
    } else if (key == "model") {
      errors.guard([&] { in_section(where, [&] { backbone::from_json(value, c.model); }); });
    } else if (key == "train") {
      errors.guard([&] { c.train = trainer::train_config_from_json(value, where); });
    } else if (key == "data") {
      if (!value.is_object()) {
        errors.add(where, "expected an object");
        continue;
      }
      for (const auto& [dk, dv] : value.items()) {
        const std::string dwhere = where + "." + dk;
        if (dk == "count") {
          if (dv.is_number_unsigned()) c.data_count = dv.get<std::size_t>();
          else errors.add(dwhere, "expected a nonnegative integer");
        } else if (dk == "val_fraction") {
          if (dv.is_number()) c.val_fraction = dv.get<double>();
          else errors.add(dwhere, "expected a number");
        } else if (dk == "mixture") {
          errors.guard([&] { in_section(dwhere, [&] { c.mixture = synthphys::mixture_from_json(dv); }); });
        } else {
          errors.add(dwhere, "unknown key");
        }
      }
    } else if (key == "paths") {
      if (!value.is_object()) {
        errors.add(where, "expected an object");
        continue;
      }
      for (const auto& [pk, pv] : value.items()) {
        const std::string pwhere = where + "." + pk;
        if (!pv.is_string()) {
          errors.add(pwhere, "expected a string");
        } else if (pk == "data") {
          c.data_dir = resolve(base_dir, pv.get<std::string>());
        } else if (pk == "out") {
          c.out_dir = resolve(base_dir, pv.get<std::string>());
        } else {
          errors.add(pwhere, "unknown key");
        }
      }
    } else if (key == "sample_steps") {
      if (value.is_number_unsigned()) c.sample_steps = value.get<std::size_t>();
      else errors.add(where, "expected a nonnegative integer");
    } else if (key == "attention_clips") {
      if (value.is_number_unsigned()) c.attention_clips = value.get<std::size_t>();
      else errors.add(where, "expected a nonnegative integer");
    } else {
      errors.add(where, "unknown key");
    }
  }
  errors.raise_if_any();
  // Semantic checks after the schema pass.
  try {
    c.model.validate();
    c.train.validate();
    c.dataset_spec().validate();
  } catch (const UsageError& e) {
    throw ParseError("$", e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json model;
  backbone::to_json(model, c.model);
  nlohmann::json data = {{"count", c.data_count}, {"val_fraction", c.val_fraction}};
  if (!c.mixture.empty()) data["mixture"] = synthphys::mixture_to_json(c.mixture);
  return {{"seed", c.seed},
          {"model", model},
          {"train", trainer::to_json(c.train)},
          {"data", data},
          {"paths", {{"data", c.data_dir.string()}, {"out", c.out_dir.string()}}},
          {"sample_steps", c.sample_steps},
          {"attention_clips", c.attention_clips}};
}

GateMode parse_gate_mode(std::string_view s) {
  if (s == "true") return GateMode::True;
  if (s == "all-ones") return GateMode::AllOnes;
  if (s == "zero") return GateMode::Zero;
  throw UsageError("gate must be one of all-ones, true, zero (got '" + std::string(s) + "')");
}

void apply_gate(backbone::Conditioning& cond, GateMode mode) {
  if (mode == GateMode::AllOnes) cond.gate = mopa::GatingVector::ones();
  if (mode == GateMode::Zero) cond.gate = mopa::GatingVector::zeros();
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto spec = cfg.dataset_spec();
  synthphys::make_dataset(spec, out_dir);
  log << "wrote " << spec.count << " clips to " << out_dir.string() << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  if (!fs::exists(cfg.data_dir / "manifest.json")) {
    log << "generating dataset in " << cfg.data_dir.string() << '\n';
    cmd_gen_data(cfg, cfg.data_dir, log);
  }
  const auto data = synthphys::Dataset::open(cfg.data_dir);
  auto train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  ensure_dir(cfg.out_dir);
  write_json(cfg.out_dir / "config.json", to_json(cfg));
  const auto result = trainer::train(cfg.model, train_cfg, data, cfg.out_dir);
  log << "trained " << result.steps << " steps; best validation loss " << fixed(result.best_val_loss) << " at step "
      << result.best_step << '\n';

  const auto model = backbone::ToyDiT::load(result.best_checkpoint);
  const auto report = trainer::evaluate(model, data, train_cfg.eval_timestep, cfg.seed);
  auto eval = trainer::to_json(report);

  // Localization of the active dynamics experts on held-out motion clips.
  std::size_t scored = 0, above = 0;
  nlohmann::json clips = nlohmann::json::array();
  auto val = data.split("val");
  for (std::size_t k = 0; k < val.size(); ++k) {
    if (cfg.attention_clips > 0 && scored >= cfg.attention_clips) break;
    const auto a = data.annotation(val[k]->id);
    const auto r = trainer::attention_report(model, data.clip(val[k]->id), a, train_cfg.eval_timestep,
                                             numcore::Rng::derive(cfg.seed, 50000 + k).next_u64(), val[k]->id);
    const auto ratio = r.dynamics_ratio();
    if (!ratio) continue;
    ++scored;
    above += *ratio > 1.0;
    clips.push_back({{"clip", val[k]->id}, {"kind", synthphys::kind_name(val[k]->kind)}, {"ratio", *ratio}});
  }
  eval["localization"] = {{"clips", scored},
                          {"above_uniform", above},
                          {"fraction", scored ? static_cast<double>(above) / static_cast<double>(scored) : 0.0},
                          {"per_clip", clips}};
  write_json(cfg.out_dir / "eval.json", eval);
  log << "macro-F1 " << fixed(report.classification.macro_f1) << ", gate delta " << fixed(report.gate_delta(), 6)
      << ", localization " << above << "/" << scored << '\n';
}

nlohmann::json cmd_evaluate(const fs::path& checkpoint, const fs::path& data_dir, std::uint64_t seed,
                            std::size_t eval_timestep, std::ostream& log) {
  const auto model = backbone::ToyDiT::load(checkpoint);
  const auto data = synthphys::Dataset::open(data_dir);
  const auto report = trainer::evaluate(model, data, eval_timestep, seed);
  auto j = trainer::to_json(report);
  log << j.dump(2) << '\n';
  return j;
}

void write_clip_pgm(const numcore::Tensor& clip, const fs::path& path) {
  if (clip.rank() != 3) throw DimensionError("write_clip_pgm: clip must be (frames, height, width)");
  const std::size_t f = clip.dim(0), h = clip.dim(1), w = clip.dim(2);
  const std::size_t width = f * (w + 1) - 1;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P2\n" << width << ' ' << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t frame = x / (w + 1), col = x % (w + 1);
      int level = 0;
      if (col < w) {
        const double v = std::clamp(clip[(frame * h + y) * w + col], -1.0, 1.0);
        level = static_cast<int>(std::lround((v + 1.0) * 127.5));
      }
      out << level << (x + 1 == width ? '\n' : ' ');
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void cmd_sample(const fs::path& checkpoint, const fs::path& prompt_file, const fs::path& out_dir, std::uint64_t seed,
                std::size_t steps, GateMode gate, std::ostream& log) {
  const auto model = backbone::ToyDiT::load(checkpoint);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(prompt_file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(prompt_file.string(), e.what());
  }
  if (!doc.is_array()) doc = nlohmann::json::array({doc});
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    physchema::PhysicalAnnotation a;
    try {
      a = physchema::from_json(doc[i]);
    } catch (const ParseError& e) {
      throw ParseError(prompt_file.string() + ":$[" + std::to_string(i) + "]" + e.path().substr(1), e.what());
    }
    auto cond = model.make_conditioning(a);
    apply_gate(cond, gate);
    numcore::Rng rng = numcore::Rng::derive(seed, i);
    const auto clip = backbone::sample(model, cond, steps, rng);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu", i);
    synthphys::write_clip(out_dir / (std::string(name) + ".clip"), clip);
    write_clip_pgm(clip, out_dir / (std::string(name) + ".pgm"));
    log << name << ": " << a.caption << '\n';
  }
}

nlohmann::json cmd_classify(const fs::path& checkpoint, const fs::path& data_dir, const std::string& clip_id,
                            std::uint64_t seed, std::size_t t, GateMode gate, std::ostream& log) {
  const auto model = backbone::ToyDiT::load(checkpoint);
  const auto data = synthphys::Dataset::open(data_dir);
  const auto a = data.annotation(clip_id);
  auto cond = model.make_conditioning(a);
  apply_gate(cond, gate);
  if (t >= model.config().diffusion_steps) throw UsageError("classify: timestep out of range");
  const auto probs = trainer::classify_clip(model, data.clip(clip_id), cond, t, seed);
  nlohmann::json cats = nlohmann::json::array();
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    cats.push_back({{"id", id},
                    {"name", physchema::category(id).name},
                    {"probability", probs[c]},
                    {"predicted", probs[c] > 0.5},
                    {"label", a.qualitative.test(id)}});
  }
  nlohmann::json out = {{"clip", clip_id}, {"timestep", t}, {"categories", cats}};
  for (std::size_t c = 0; c < probs.size(); ++c)
    if (probs[c] > 0.5) log << physchema::category(static_cast<int>(c) + 1).name << ' ' << fixed(probs[c], 3) << '\n';
  return out;
}

nlohmann::json cmd_inspect_attn(const fs::path& checkpoint, const fs::path& data_dir, const std::string& clip_id,
                                const fs::path& out_dir, std::uint64_t seed, std::size_t t, std::ostream& log) {
  const auto model = backbone::ToyDiT::load(checkpoint);
  const auto data = synthphys::Dataset::open(data_dir);
  if (t >= model.config().diffusion_steps) throw UsageError("inspect-attn: timestep out of range");
  const auto r = trainer::attention_report(model, data.clip(clip_id), data.annotation(clip_id), t, seed, clip_id);
  ensure_dir(out_dir);
  const auto j = trainer::to_json(r);
  write_json(out_dir / (clip_id + "_attention.json"), j);
  trainer::write_attention_pgm(model.config(), r, out_dir / (clip_id + "_attention.pgm"));
  if (!r.applicable) {
    log << clip_id << ": static clip, localization n/a\n";
  } else {
    for (const auto& e : r.experts)
      if (e.gate == 1.0 && e.ratio)
        log << physchema::category(e.category).name << " ratio " << fixed(*e.ratio, 3) << '\n';
  }
  return j;
}

std::size_t cmd_validate(const std::vector<fs::path>& files, bool strict, std::ostream& log) {
  std::size_t total = 0;
  for (const auto& f : files) {
    physchema::PhysicalAnnotation a;
    try {
      a = physchema::parse(read_text(f));
    } catch (const ParseError& e) {
      throw ParseError(f.string() + ":" + e.path(), e.what());
    }
    const auto v = physchema::validate(a, strict);
    log << f.string() << ": " << v.size() << " violations\n";
    for (const auto& x : v) log << "  " << x.message() << '\n';
    total += v.size();
  }
  return total;
}

nlohmann::json cmd_stats(const fs::path& data_dir, std::ostream& log) {
  const auto data = synthphys::Dataset::open(data_dir);
  const auto s = synthphys::compute_stats(data);
  nlohmann::json branches = nlohmann::json::object();
  log << "clips " << s.total << '\n';
  for (const auto& [name, n] : s.by_branch) {
    branches[name] = {{"count", n}, {"fraction", s.branch_fraction(name)}};
    log << "branch " << name << ' ' << n << ' ' << fixed(s.branch_fraction(name)) << '\n';
  }
  for (const auto& [name, n] : s.by_kind) log << "kind " << name << ' ' << n << '\n';
  for (const auto& [name, n] : s.by_split) log << "split " << name << ' ' << n << '\n';
  return {{"total", s.total}, {"branches", branches}, {"kinds", s.by_kind}, {"splits", s.by_split}};
}

}  // namespace wisa::cli
