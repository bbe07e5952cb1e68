#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "support/model_fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("wisa_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code = -1;
  std::string out, err;
};

Run lab(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + WISA_LAB_EXE + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Run config at the 2x4x4 test geometry.
json tiny_run_config(const fs::path& root) {
  const auto m = wisa::testing::tiny_config();
  return {{"seed", 3},
          {"model",
           {{"frames", m.frames},
            {"height", m.height},
            {"width", m.width},
            {"patch_frames", m.patch_frames},
            {"patch_height", m.patch_height},
            {"patch_width", m.patch_width},
            {"model_dim", m.model_dim},
            {"n_heads", m.n_heads},
            {"n_blocks", m.n_blocks},
            {"mlp_ratio", m.mlp_ratio},
            {"time_freq_dim", m.time_freq_dim},
            {"diffusion_steps", m.diffusion_steps},
            {"max_text_len", m.max_text_len},
            {"phys_head_dim", m.phys_head_dim},
            {"quant_width", m.quant_width}}},
          {"train",
           {{"steps", 4},
            {"lr", 1e-2},
            {"batch", 2},
            {"val_every", 2},
            {"val_clips", 4},
            {"val_timesteps", 2},
            {"eval_timestep", 5},
            {"lora_rank", 2}}},
          {"data", {{"count", 24}, {"val_fraction", 0.25}}},
          {"paths", {{"data", (root / "data").string()}, {"out", (root / "run").string()}}},
          {"attention_clips", 4}};
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "run.json") {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(1);
  return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

std::set<std::string> long_flags(const std::string& help) {
  std::set<std::string> flags;
  const std::regex re("--[a-z][a-z-]*");
  for (auto it = std::sregex_iterator(help.begin(), help.end(), re); it != std::sregex_iterator(); ++it)
    flags.insert(it->str());
  return flags;
}

}  // namespace

TEST_CASE("help of every subcommand documents exactly its flags") {
  TempDir tmp("help");
  const std::map<std::string, std::set<std::string>> documented = {
      {"gen-data", {"--help", "--config", "--seed", "--out"}},
      {"train", {"--help", "--config", "--seed", "--out", "--steps", "--lambda", "--perturb-prob"}},
      {"evaluate", {"--help", "--checkpoint", "--data", "--seed", "--timestep"}},
      {"sample", {"--help", "--checkpoint", "--prompts", "--out", "--seed", "--sample-steps", "--gate"}},
      {"classify", {"--help", "--checkpoint", "--data", "--clip", "--seed", "--timestep", "--gate"}},
      {"inspect-attn", {"--help", "--checkpoint", "--data", "--clip", "--out", "--seed", "--timestep"}},
      {"validate", {"--help", "--strict", "--lenient"}},
      {"stats", {"--help", "--data"}},
  };
  const auto top = lab("--help", tmp.path);
  CHECK(top.code == 0);
  for (const auto& [sub, flags] : documented) {
    CAPTURE(sub);
    CHECK(top.out.find(sub) != std::string::npos);
    const auto r = lab(sub + " --help", tmp.path);
    CHECK(r.code == 0);
    CHECK(long_flags(r.out) == flags);
  }
  // Any other long flag is rejected.
  CHECK(lab("stats --data x --verbose", tmp.path).code != 0);
}

TEST_CASE("gen-data is reproducible and stats recount the manifest") {
  TempDir tmp("gen");
  const auto cfg = write_config(tmp.path, tiny_run_config(tmp.path));
  const auto a = tmp.path / "a", b = tmp.path / "b";
  REQUIRE(lab("gen-data --config '" + cfg.string() + "' --seed 9 --out '" + a.string() + "'", tmp.path).code == 0);
  REQUIRE(lab("gen-data --config '" + cfg.string() + "' --seed 9 --out '" + b.string() + "'", tmp.path).code == 0);
  const auto ta = tree(a);
  CHECK(ta.size() == 2 * 24 + 1);
  CHECK(ta == tree(b));
  const auto c = tmp.path / "c";
  REQUIRE(lab("gen-data --config '" + cfg.string() + "' --seed 10 --out '" + c.string() + "'", tmp.path).code == 0);
  CHECK(tree(c) != ta);

  // Recount from the manifest with a local kind -> branch table.
  const std::map<std::string, std::string> branch_of = {
      {"bounce", "Dynamics"},          {"pendulum", "Dynamics"},     {"flow", "Dynamics"},   {"melt", "Thermodynamics"},
      {"combustion_flicker", "Thermodynamics"}, {"reflection", "Optics"}, {"static", "none"}};
  const auto manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.at("seed") == 9);
  std::map<std::string, std::size_t> branches, kinds, splits;
  for (const auto& clip : manifest.at("clips")) {
    ++kinds[clip.at("kind").get<std::string>()];
    ++branches[branch_of.at(clip.at("kind").get<std::string>())];
    ++splits[clip.at("split").get<std::string>()];
  }
  const auto r = lab("stats --data '" + a.string() + "'", tmp.path);
  REQUIRE(r.code == 0);
  const auto stats = json::parse(r.out);
  CHECK(stats.at("total") == 24);
  CHECK(stats.at("branches").size() == branches.size());
  for (const auto& [name, n] : branches) {
    CAPTURE(name);
    CHECK(stats.at("branches").at(name).at("count") == n);
    CHECK(stats.at("branches").at(name).at("fraction").get<double>() == doctest::Approx(n / 24.0).epsilon(1e-12));
  }
  CHECK(stats.at("kinds") == json(kinds));
  CHECK(stats.at("splits") == json(splits));
}

TEST_CASE("validate reports violations per file") {
  TempDir tmp("validate");
  const auto cfg = write_config(tmp.path, tiny_run_config(tmp.path));
  const auto data = tmp.path / "d";
  REQUIRE(lab("gen-data --config '" + cfg.string() + "' --out '" + data.string() + "'", tmp.path).code == 0);
  const auto good = data / "annotations" / "clip_00000.json";

  auto r = lab("validate '" + good.string() + "'", tmp.path);
  CHECK(r.code == 0);
  CHECK(r.out == good.string() + ": 0 violations\n");

  // Two dynamics categories plus the dynamics fallback: strict flags it, lenient does not.
  auto doc = json::parse(slurp(good));
  doc["qualitative"] = json::array({1, 2, 7, 14, 20, 22, 29});
  const auto bad = tmp.path / "bad.json";
  std::ofstream(bad) << doc.dump();
  r = lab("validate --strict '" + bad.string() + "'", tmp.path);
  CHECK(r.code == 1);
  CHECK(r.out.find("0 violations") == std::string::npos);
  CHECK(lab("validate --lenient '" + bad.string() + "'", tmp.path).code == 0);
  CHECK(lab("validate --strict --lenient '" + good.string() + "'", tmp.path).code != 0);

  std::ofstream(tmp.path / "broken.json") << "{\"caption\": ";
  r = lab("validate '" + (tmp.path / "broken.json").string() + "'", tmp.path);
  CHECK(r.code == 2);
  CHECK(r.err.find("broken.json") != std::string::npos);

  r = lab("validate '" + (tmp.path / "missing.json").string() + "'", tmp.path);
  CHECK(r.code == 3);
}

TEST_CASE("invalid config lists every JSON path") {
  TempDir tmp("badcfg");
  auto j = tiny_run_config(tmp.path);
  j["model"]["colour"] = 1;
  j["train"]["lr"] = "fast";
  j["data"]["count"] = -5;
  j["extra"] = true;
  const auto cfg = write_config(tmp.path, j);
  const auto r = lab("train --config '" + cfg.string() + "'", tmp.path);
  CHECK(r.code == 2);
  for (const char* path : {"$.model.colour", "$.train.lr", "$.data.count", "$.extra"}) {
    CAPTURE(path);
    CHECK(r.err.find(path) != std::string::npos);
  }
  CHECK_FALSE(fs::exists(tmp.path / "run"));
}

TEST_CASE("train with fixed seed is reproducible and flags win over the config") {
  TempDir tmp("train");
  const auto cfg = write_config(tmp.path, tiny_run_config(tmp.path));
  const auto run = [&](const std::string& out) {
    return lab("train --config '" + cfg.string() + "' --seed 5 --steps 3 --lambda 0.2 --perturb-prob 0.3 --out '" +
                   (tmp.path / out).string() + "'",
               tmp.path);
  };
  REQUIRE(run("r1").code == 0);
  REQUIRE(run("r2").code == 0);
  for (const char* f : {"metrics.jsonl", "validation.jsonl", "best.ckpt", "last.ckpt", "eval.json"}) {
    CAPTURE(f);
    CHECK(slurp(tmp.path / "r1" / f) == slurp(tmp.path / "r2" / f));
  }
  std::istringstream metrics(slurp(tmp.path / "r1" / "metrics.jsonl"));
  std::size_t rows = 0;
  for (std::string line; std::getline(metrics, line);) {
    const auto row = json::parse(line);
    CHECK(row.at("step") == ++rows);
    for (const char* k : {"l_diffusion", "l_pc", "l_total"}) CHECK(row.contains(k));
  }
  CHECK(rows == 3);
  const auto used = json::parse(slurp(tmp.path / "r1" / "config.json"));
  CHECK(used.at("seed") == 5);
  CHECK(used.at("train").at("lambda") == 0.2);
  CHECK(used.at("train").at("perturb_prob") == 0.3);
  const auto eval = json::parse(slurp(tmp.path / "r1" / "eval.json"));
  CHECK(eval.contains("macro_f1"));
  CHECK(eval.contains("gate_delta"));
  CHECK(eval.at("localization").at("clips").get<int>() <= 4);

  // Downstream commands on the checkpoint.
  const auto ckpt = (tmp.path / "r1" / "best.ckpt").string();
  const auto data = (tmp.path / "data").string();
  auto r = lab("evaluate --checkpoint '" + ckpt + "' --data '" + data + "' --timestep 5", tmp.path);
  CHECK(r.code == 0);
  CHECK(json::parse(r.out).at("clips").get<int>() > 0);

  const auto manifest = json::parse(slurp(tmp.path / "data" / "manifest.json"));
  std::string moving, still;
  for (const auto& c : manifest.at("clips")) {
    if (c.at("kind") == "bounce" && moving.empty()) moving = c.at("id");
    if (c.at("kind") == "static" && still.empty()) still = c.at("id");
  }
  REQUIRE_FALSE(moving.empty());

  const auto classify = "classify --checkpoint '" + ckpt + "' --data '" + data + "' --clip " + moving;
  r = lab(classify + " --seed 1", tmp.path);
  CHECK(r.code == 0);
  const auto probs = json::parse(r.out).at("categories");
  CHECK(probs.size() == 29);
  CHECK(lab(classify + " --seed 1", tmp.path).out == r.out);
  CHECK(lab(classify + " --gate bogus", tmp.path).code != 0);
  CHECK(lab("classify --checkpoint '" + ckpt + "' --data '" + data + "' --clip nope", tmp.path).code != 0);

  const auto attn_dir = tmp.path / "attn";
  r = lab("inspect-attn --checkpoint '" + ckpt + "' --data '" + data + "' --clip " + moving + " --out '" +
              attn_dir.string() + "'",
          tmp.path);
  CHECK(r.code == 0);
  CHECK(fs::exists(attn_dir / (moving + "_attention.pgm")));
  const auto report = json::parse(slurp(attn_dir / (moving + "_attention.json")));
  CHECK(report.at("experts").size() == 29);
  if (!still.empty()) {
    r = lab("inspect-attn --checkpoint '" + ckpt + "' --data '" + data + "' --clip " + still + " --out '" +
                attn_dir.string() + "'",
            tmp.path);
    CHECK(r.code == 0);
    CHECK(json::parse(slurp(attn_dir / (still + "_attention.json"))).at("dynamics_ratio") == "n/a");
  }

  const auto prompts = tmp.path / "prompts.json";
  std::ofstream(prompts) << slurp(tmp.path / "data" / "annotations" / (moving + ".json"));
  const auto sample = "sample --checkpoint '" + ckpt + "' --prompts '" + prompts.string() + "' --sample-steps 5 --out '";
  REQUIRE(lab(sample + (tmp.path / "s1").string() + "' --gate all-ones", tmp.path).code == 0);
  REQUIRE(lab(sample + (tmp.path / "s2").string() + "' --gate all-ones", tmp.path).code == 0);
  CHECK(tree(tmp.path / "s1") == tree(tmp.path / "s2"));
  CHECK(fs::exists(tmp.path / "s1" / "sample_000.pgm"));
}

TEST_CASE("missing inputs exit with the i/o code") {
  TempDir tmp("missing");
  const auto r = lab("stats --data '" + (tmp.path / "nowhere").string() + "'", tmp.path);
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error:", 0) == 0);
}
