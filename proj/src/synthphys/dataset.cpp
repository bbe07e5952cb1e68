#include "wisa/synthphys/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "wisa/errors.hpp"

namespace wisa::synthphys {

namespace fs = std::filesystem;

namespace {

std::string clip_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05zu", i);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated clip header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

// Message of a ParseError without its path prefix.
std::string bare_message(const ParseError& e) { return std::string(e.what()).substr(e.path().size() + 2); }

std::string branch_label(ScenarioKind k) {
  const auto b = kind_branch(k);
  return b ? std::string(physchema::group_name(*b)) : "none";
}

}  // namespace

DatasetSpec DatasetSpec::defaults(std::size_t count, std::uint64_t seed) {
  DatasetSpec s;
  s.count = count;
  s.seed = seed;
  const double dyn = 0.47 / 3.0;
  s.mixture = {{ScenarioKind::Bounce, dyn, std::nullopt},     {ScenarioKind::Pendulum, dyn, std::nullopt},
               {ScenarioKind::Flow, dyn, std::nullopt},       {ScenarioKind::Melt, 0.12, std::nullopt},
               {ScenarioKind::CombustionFlicker, 0.12, std::nullopt}, {ScenarioKind::Reflection, 0.29, std::nullopt},
               {ScenarioKind::Static, 0.0, std::nullopt}};
  return s;
}

void DatasetSpec::validate() const {
  if (mixture.empty()) throw UsageError("dataset mixture is empty");
  double total = 0.0;
  for (const auto& e : mixture) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      throw UsageError("mixture weight of " + std::string(kind_name(e.kind)) + " must be nonnegative");
    if (e.fixed) e.fixed->validate();
    total += e.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("mixture weights sum to " + std::to_string(total) + ", not 1");
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0)) throw UsageError("val_fraction must lie in [0, 1]");
  Scenario probe;
  probe.frames = frames;
  probe.height = height;
  probe.width = width;
  probe.radius = 1.0;
  probe.validate();
}

std::vector<MixtureEntry> mixture_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("$", "scenario spec must be a list");
  std::vector<MixtureEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "$[" + std::to_string(i) + "]";
    const auto& e = j[i];
    if (!e.is_object()) throw ParseError(where, "expected an object");
    if (!e.contains("weight") || !e["weight"].is_number()) throw ParseError(where + ".weight", "expected a number");
    MixtureEntry m;
    try {
      if (!e.contains("kind") || !e["kind"].is_string()) throw ParseError("$.kind", "expected a string");
      m.kind = parse_kind(e["kind"].get<std::string>());
      if (e.contains("params")) m.fixed = scenario_from_json(e);
    } catch (const ParseError& err) {
      throw ParseError(where + err.path().substr(1), bare_message(err));
    } catch (const UsageError& err) {
      throw ParseError(where, err.what());
    }
    m.weight = e["weight"].get<double>();
    out.push_back(std::move(m));
  }
  return out;
}

nlohmann::json mixture_to_json(const std::vector<MixtureEntry>& m) {
  auto out = nlohmann::json::array();
  for (const auto& e : m) {
    nlohmann::json j = e.fixed ? scenario_to_json(*e.fixed) : nlohmann::json{{"kind", kind_name(e.kind)}};
    j["weight"] = e.weight;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<ClipRecord> plan_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<double> cumulative;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < spec.mixture.size(); ++k) {
    acc += spec.mixture[k].weight;
    cumulative.push_back(acc);
    if (spec.mixture[k].weight > 0.0) last_positive = k;
  }
  std::vector<ClipRecord> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = Rng::derive(spec.seed, 1000 + i);
    const double u = rng.uniform() * acc;
    std::size_t k = last_positive;
    for (std::size_t j = 0; j < cumulative.size(); ++j)
      if (u < cumulative[j]) {
        k = j;
        break;
      }
    const auto& entry = spec.mixture[k];
    ClipRecord r;
    r.id = clip_id(i);
    r.kind = entry.kind;
    r.split = rng.uniform() < spec.val_fraction ? "val" : "train";
    r.seed = rng.next_u64();
    if (entry.fixed) {
      r.scenario = *entry.fixed;
      r.scenario.frames = spec.frames;
      r.scenario.height = spec.height;
      r.scenario.width = spec.width;
    } else {
      r.scenario = Scenario::sample(entry.kind, rng, spec.frames, spec.height, spec.width);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_clip(const fs::path& path, const Tensor& clip) {
  if (clip.rank() != 3) throw DimensionError("clip must have shape (frames, height, width)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  put_u32(out, kClipMagic);
  for (std::size_t a = 0; a < 3; ++a) put_u32(out, static_cast<std::uint32_t>(clip.dim(a)));
  for (double v : clip.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_clip(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (get_u32(in) != kClipMagic) throw IoError(path.string() + ": not a clip file");
  const std::size_t f = get_u32(in), h = get_u32(in), w = get_u32(in);
  Tensor t({f, h, w});
  for (auto& v : t.data()) {
    const std::uint32_t bits = get_u32(in);
    float x;
    std::memcpy(&x, &bits, 4);
    v = x;
  }
  return t;
}

void make_dataset(const DatasetSpec& spec, const fs::path& dir) {
  const auto plan = plan_dataset(spec);
  std::error_code ec;
  fs::create_directories(dir / "clips", ec);
  if (!ec) fs::create_directories(dir / "annotations", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      try {
        const auto& r = plan[i];
        const auto clip = generate(r.scenario, r.seed);
        write_clip(dir / "clips" / (r.id + ".clip"), clip.frames);
        write_text(dir / "annotations" / (r.id + ".json"), physchema::serialize(clip.annotation));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = plan.size();
        return;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(generation_threads(), plan.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  nlohmann::json clips = nlohmann::json::array();
  for (const auto& r : plan)
    clips.push_back({{"id", r.id}, {"kind", kind_name(r.kind)}, {"split", r.split}, {"seed", r.seed},
                     {"scenario", scenario_to_json(r.scenario)}});
  nlohmann::json manifest = {
      {"format", 1},
      {"seed", spec.seed},
      {"count", spec.count},
      {"val_fraction", spec.val_fraction},
      {"geometry", {{"frames", spec.frames}, {"height", spec.height}, {"width", spec.width}}},
      {"mixture", mixture_to_json(spec.mixture)},
      {"clips", clips},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset Dataset::open(const fs::path& dir) {
  Dataset ds;
  ds.dir_ = dir;
  const auto path = dir / "manifest.json";
  try {
    ds.manifest_ = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
  if (!ds.manifest_.contains("clips") || !ds.manifest_["clips"].is_array())
    throw ParseError(path.string() + ":$.clips", "expected a list");
  const auto& clips = ds.manifest_["clips"];
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& c = clips[i];
    const std::string where = "$.clips[" + std::to_string(i) + "]";
    try {
      ClipRecord r;
      r.id = c.at("id").get<std::string>();
      r.kind = parse_kind(c.at("kind").get<std::string>());
      r.split = c.at("split").get<std::string>();
      r.seed = c.at("seed").get<std::uint64_t>();
      r.scenario = scenario_from_json(c.at("scenario"));
      if (r.split != "train" && r.split != "val") throw DatasetError("split must be train or val");
      ds.records_.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + where, e.what());
    } catch (const UsageError& e) {
      throw ParseError(path.string() + ":" + where, e.what());
    }
  }
  return ds;
}

std::vector<const ClipRecord*> Dataset::split(std::string_view name) const {
  std::vector<const ClipRecord*> out;
  for (const auto& r : records_)
    if (r.split == name) out.push_back(&r);
  return out;
}

Tensor Dataset::clip(const std::string& id) const { return read_clip(dir_ / "clips" / (id + ".clip")); }

physchema::PhysicalAnnotation Dataset::annotation(const std::string& id) const {
  const auto path = dir_ / "annotations" / (id + ".json");
  try {
    return physchema::parse(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + e.path(), bare_message(e));
  }
}

void Dataset::check_disjoint() const {
  std::map<std::string, std::string> seen;
  for (const auto& r : records_) {
    auto [it, fresh] = seen.emplace(r.id, r.split);
    if (!fresh && it->second != r.split) throw DatasetError("clip " + r.id + " appears in both train and val");
  }
}

double DatasetStats::branch_fraction(const std::string& branch) const {
  if (total == 0) return 0.0;
  const auto it = by_branch.find(branch);
  return it == by_branch.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
}

DatasetStats compute_stats(const Dataset& ds) {
  DatasetStats s;
  for (const auto& r : ds.records()) {
    ++s.total;
    ++s.by_kind[std::string(kind_name(r.kind))];
    ++s.by_branch[branch_label(r.kind)];
    ++s.by_split[r.split];
  }
  return s;
}

std::size_t generation_threads() {
  if (const char* env = std::getenv("WISA_LAB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    throw UsageError("WISA_LAB_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace wisa::synthphys
