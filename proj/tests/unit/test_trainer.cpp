#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include <unistd.h>

#include "support/model_fixtures.hpp"
#include "wisa/errors.hpp"
#include "wisa/numcore/ops.hpp"
#include "wisa/trainer/evaluate.hpp"
#include "wisa/trainer/loss.hpp"
#include "wisa/trainer/optimizer.hpp"
#include "wisa/trainer/train.hpp"

using namespace wisa;
using namespace wisa::trainer;
namespace fs = std::filesystem;
namespace nc = wisa::numcore;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("wisa_tr_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 24 clips at the tiny model geometry.
fs::path tiny_dataset(const fs::path& root, std::size_t count = 24) {
  auto spec = synthphys::DatasetSpec::defaults(count, 3);
  const auto cfg = wisa::testing::tiny_config();
  spec.frames = cfg.frames;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.val_fraction = 0.25;
  const auto dir = root / "data";
  synthphys::make_dataset(spec, dir);
  return dir;
}

TrainConfig tiny_train(std::size_t steps) {
  TrainConfig c;
  c.steps = steps;
  c.lr = 1e-2;
  c.batch = 2;
  c.val_every = 2;
  c.val_clips = 4;
  c.val_timesteps = 2;
  c.eval_timestep = 5;
  c.lora_rank = 2;
  return c;
}

backbone::ToyDiT tiny_model(const synthphys::Dataset& data, const TrainConfig& c) {
  auto m = backbone::ToyDiT::create(wisa::testing::tiny_config(), build_vocabulary(data), c.seed);
  m.add_lora(c.lora_rank, c.lora_alpha, c.seed);
  return m;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string s; std::getline(in, s);) out.push_back(s);
  return out;
}

}  // namespace

TEST_CASE("combined loss reference values") {
  nc::Tape tape;
  const auto d = tape.leaf(nc::Tensor::scalar(0.75));
  CHECK(combined_loss(d, tape.leaf(nc::Tensor::scalar(0.0)), 0.3).value()[0] == 0.75);
  CHECK(combined_loss(d, tape.leaf(nc::Tensor::scalar(1.0)), 1.0).value()[0] == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(combined_loss(d, tape.leaf(nc::Tensor::scalar(-0.1)), 1.0), wisa::ContractError);
  CHECK_THROWS_AS(combined_loss(d, tape.leaf(nc::Tensor::scalar(0.1)), -1.0), wisa::UsageError);
  CHECK_THROWS_AS(combined_loss(d, tape.leaf(nc::Tensor::vector({0.1, 0.2})), 1.0), wisa::DimensionError);
  const auto b = combine(d, tape.leaf(nc::Tensor::scalar(3.0)), 0.5);
  CHECK(b.l_total.value()[0] == doctest::Approx(0.75 + 0.5 * 3.0 / 4.0).epsilon(1e-15));
}

TEST_CASE("auxiliary term stays below lambda and grows with the classifier loss") {
  for (double lambda : {0.05, 0.1, 1.0, 3.0}) {
    double prev = -1.0;
    for (double x = 0.0; x <= 1e4; x = x * 1.7 + 0.01) {
      nc::Tape tape;
      const double aux =
          combined_loss(tape.constant(nc::Tensor::scalar(0.0)), tape.constant(nc::Tensor::scalar(x)), lambda)
              .value()[0];
      CHECK(aux < lambda);
      CHECK(aux > prev);
      prev = aux;
    }
  }
}

TEST_CASE("gradient through the combined loss is lambda / (1 + v) times the classifier gradient") {
  nc::Rng rng(4);
  nc::ParameterSet params;
  const auto cls = physmodule::Classifier::create(params, 5);
  for (auto& p : params) p.value = rng.normal_tensor(p.value.shape(), 0.7);
  const nc::Tensor feature = rng.normal_tensor({3, 5});
  mopa::GatingVector target;
  for (auto& v : target.values) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  const double lambda = 0.37;

  // Raw BCE gradient.
  nc::Tape t1;
  nc::Binding b1(t1, params, nc::BindMode::All);
  const auto l1 = physmodule::bce_multilabel(physmodule::classify(b1, cls, t1.constant(feature)), target);
  const double v = l1.value()[0];
  t1.backward(l1);

  nc::Tape t2;
  nc::Binding b2(t2, params, nc::BindMode::All);
  const auto l2 = physmodule::bce_multilabel(physmodule::classify(b2, cls, t2.constant(feature)), target);
  t2.backward(combined_loss(t2.constant(nc::Tensor::scalar(0.2)), l2, lambda));

  // Without the stop-gradient the derivative is lambda / (1 + v)^2.
  nc::Tape t3;
  nc::Binding b3(t3, params, nc::BindMode::All);
  const auto l3 = physmodule::bce_multilabel(physmodule::classify(b3, cls, t3.constant(feature)), target);
  t3.backward(nc::scale(nc::div(l3, nc::add_scalar(l3, 1.0)), lambda));

  double max_diff = 0.0, max_plain = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto raw = b1.grad(i), got = b2.grad(i), plain = b3.grad(i);
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const double want = lambda / (1.0 + v) * raw[k];
      max_diff = std::max(max_diff, std::abs(got[k] - want));
      max_plain = std::max(max_plain, std::abs(plain[k] - want));
    }
  }
  CHECK(max_diff <= 1e-10);
  CHECK(max_plain > 1e-6);
}

TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
  nc::ParameterSet params;
  params.add("w", nc::Tensor::vector({1.0, -2.0, 0.5}));
  params.add("frozen", nc::Tensor::vector({3.0}), false);
  Adam opt(params, 0.1);
  opt.step({nc::Tensor::vector({0.5, -4.0, 0.0}), nc::Tensor::vector({9.0})});
  const auto w = params.value("w");
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(w[1] == doctest::Approx(-1.9).epsilon(1e-7));
  CHECK(w[2] == 0.5);
  CHECK(params.value("frozen")[0] == 3.0);

  // Second step, hand-computed moments.
  const double w0 = params.value("w")[0];
  opt.step({nc::Tensor::vector({1.0, 0.0, 0.0}), nc::Tensor::vector({0.0})});
  const double m = 0.9 * 0.05 + 0.1 * 1.0, vv = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mh = m / (1 - 0.81), vh = vv / (1 - 0.999 * 0.999);
  CHECK(params.value("w")[0] == doctest::Approx(w0 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
  CHECK_THROWS_AS(Adam(params, 0.0), wisa::UsageError);
}

TEST_CASE("score_predictions: perfect predictor, chance level and hand count") {
  nc::Rng rng(8);
  std::vector<Probabilities> probs;
  std::vector<mopa::GatingVector> targets;
  for (int n = 0; n < 20; ++n) {
    mopa::GatingVector g;
    for (auto& v : g.values) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    targets.push_back(g);
    Probabilities p{};
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = g.values[c];
    probs.push_back(p);
  }
  const auto perfect = score_predictions(probs, targets);
  CHECK(perfect.macro_f1 == 1.0);

  // Zero-initialized classifier: every probability is exactly 0.5, nothing is predicted.
  std::vector<Probabilities> half(20);
  for (auto& p : half) p.fill(0.5);
  const auto chance = score_predictions(half, targets);
  for (const auto& s : chance.categories) {
    std::size_t absent = 0;
    for (const auto& t : targets) absent += t.values[s.id - 1] == 0.0;
    CHECK(static_cast<double>(s.tn + s.tp) / 20.0 == doctest::Approx(absent / 20.0));
  }

  // Random predictions against a confusion matrix counted from sets.
  for (auto& p : probs)
    for (auto& v : p) v = rng.uniform();
  const auto r = score_predictions(probs, targets);
  double f1_sum = 0.0;
  int defined = 0;
  for (int c = 0; c < 29; ++c) {
    std::set<int> predicted, actual;
    for (int n = 0; n < 20; ++n) {
      if (probs[n][c] > 0.5) predicted.insert(n);
      if (targets[n].values[c] == 1.0) actual.insert(n);
    }
    int both = 0;
    for (int n : predicted) both += actual.count(n) ? 1 : 0;
    const auto& s = r.categories[c];
    CHECK(s.tp == static_cast<std::size_t>(both));
    CHECK(s.fp == predicted.size() - both);
    CHECK(s.fn == actual.size() - both);
    if (!predicted.empty() || !actual.empty()) {
      const double prec = predicted.empty() ? 0.0 : double(both) / predicted.size();
      const double rec = actual.empty() ? 0.0 : double(both) / actual.size();
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      CHECK(s.f1 == doctest::Approx(f1).epsilon(1e-12));
      f1_sum += f1;
      ++defined;
    }
  }
  CHECK(r.macro_f1 == doctest::Approx(f1_sum / defined).epsilon(1e-12));
}

TEST_CASE("localization ratio baselines and brute-force agreement") {
  const std::size_t n = 6;
  std::vector<bool> mask{true, false, false, true, false, false};
  nc::Tensor uniform({n, n}, 1.0 / n);
  CHECK(*localization_ratio(uniform, mask) == doctest::Approx(1.0).epsilon(1e-15));

  nc::Tensor inside({n, n}, 0.0);
  for (std::size_t q = 0; q < n; ++q) inside.at(q, 0) = inside.at(q, 3) = 0.5;
  CHECK(*localization_ratio(inside, mask) == doctest::Approx(3.0).epsilon(1e-15));  // 1 / (2/6)

  nc::Rng rng(2);
  nc::Tensor a = rng.uniform_tensor({n, n}, 0.0, 1.0);
  for (std::size_t q = 0; q < n; ++q) {
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) s += a.at(q, k);
    for (std::size_t k = 0; k < n; ++k) a.at(q, k) /= s;
  }
  double brute = 0.0;
  for (std::size_t q = 0; q < n; ++q) brute += (a.at(q, 0) + a.at(q, 3)) / n;
  CHECK(*localization_ratio(a, mask) == doctest::Approx(brute * 3.0).epsilon(1e-12));

  CHECK_FALSE(localization_ratio(a, std::vector<bool>(n, false)).has_value());
  CHECK_THROWS_AS(localization_ratio(a, std::vector<bool>(n + 1, false)), wisa::DimensionError);
}

TEST_CASE("motion mask covers the moving disc and nothing in a static clip") {
  backbone::ToyDiTConfig cfg;  // 8 x 16 x 16, 4 x 4 x 4 tokens
  synthphys::Scenario s;
  s.kind = synthphys::ScenarioKind::Static;
  const auto still = synthphys::generate(s, 1);
  const auto m0 = motion_mask(cfg, still.frames);
  CHECK(std::count(m0.begin(), m0.end(), true) == 0);

  s.kind = synthphys::ScenarioKind::Flow;
  const auto flow = synthphys::generate(s, 2);
  const auto m1 = motion_mask(cfg, flow.frames);
  const auto moving = std::count(m1.begin(), m1.end(), true);
  CHECK(moving > 0);
  CHECK(moving < static_cast<long>(m1.size()) / 2);
  // Every token containing the advected blob centre is marked.
  for (std::size_t f = 0; f < cfg.frames; ++f) {
    const auto& p = flow.track[f];
    const std::size_t token = ((f / 2) * 4 + static_cast<std::size_t>(p.y) / 4) * 4 + static_cast<std::size_t>(p.x) / 4;
    CHECK(m1[token]);
  }
}

TEST_CASE("train config json rejects unknown keys with their path") {
  const auto c = tiny_train(3);
  CHECK(to_json(train_config_from_json(to_json(c))) == to_json(c));
  auto j = to_json(c);
  j["momentum"] = 0.9;
  try {
    train_config_from_json(j, "$.train");
    FAIL("expected ParseError");
  } catch (const wisa::ParseError& e) {
    CHECK(e.path() == "$.train.momentum");
  }
  j = to_json(c);
  j["steps"] = -1;
  CHECK_THROWS_AS(train_config_from_json(j), wisa::ParseError);
  auto bad = c;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), wisa::UsageError);
}

TEST_CASE("finetune keeps the base frozen and logs one row per step") {
  TempDir tmp("frozen");
  const auto data = synthphys::Dataset::open(tiny_dataset(tmp.path));
  const auto cfg = tiny_train(5);
  auto model = tiny_model(data, cfg);
  const auto before = model.params();
  const auto result = finetune(model, cfg, data, tmp.path / "run");

  std::size_t changed_trainable = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = model.params()[i];
    if (!p.trainable) {
      INFO(p.name);
      CHECK(p.value == before[i].value);
    } else {
      changed_trainable += !(p.value == before[i].value);
    }
  }
  CHECK(changed_trainable > 0);

  const auto rows = lines(result.metrics_log);
  REQUIRE(rows.size() == 5);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto j = nlohmann::json::parse(rows[k]);
    CHECK(j.size() == 4);
    CHECK(j.at("step").get<std::size_t>() == k + 1);
    for (const char* key : {"l_diffusion", "l_pc", "l_total"}) CHECK(j.at(key).is_number());
    const double total = j["l_diffusion"].get<double>() + 0.1 * j["l_pc"].get<double>() / (1 + j["l_pc"].get<double>());
    CHECK(j["l_total"].get<double>() == doctest::Approx(total).epsilon(1e-12));
  }
  CHECK(fs::exists(result.best_checkpoint));
  CHECK(fs::exists(result.last_checkpoint));
  CHECK(lines(tmp.path / "run" / "validation.jsonl").size() == 3);  // steps 2, 4, 5
}

TEST_CASE("training is bit-reproducible") {
  TempDir tmp("repro");
  const auto data = synthphys::Dataset::open(tiny_dataset(tmp.path));
  auto cfg = tiny_train(4);
  cfg.pretrain_steps = 2;
  const auto a = train(wisa::testing::tiny_config(), cfg, data, tmp.path / "a");
  const auto b = train(wisa::testing::tiny_config(), cfg, data, tmp.path / "b");
  for (const char* f : {"metrics.jsonl", "validation.jsonl", "pretrain.jsonl", "best.ckpt", "last.ckpt"}) {
    INFO(f);
    CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
  }
  cfg.seed = 1;
  train(wisa::testing::tiny_config(), cfg, data, tmp.path / "c");
  CHECK(slurp(tmp.path / "a" / "metrics.jsonl") != slurp(tmp.path / "c" / "metrics.jsonl"));
}

TEST_CASE("lambda 0 reproduces the diffusion trajectory of a run without the classifier") {
  TempDir tmp("paired");
  const auto data = synthphys::Dataset::open(tiny_dataset(tmp.path));
  auto with = tiny_train(6);
  with.lambda = 0.0;
  auto without = with;
  without.classifier = false;
  auto m1 = tiny_model(data, with);
  auto m2 = tiny_model(data, without);
  const auto r1 = finetune(m1, with, data, tmp.path / "with");
  const auto r2 = finetune(m2, without, data, tmp.path / "without");
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t k = 0; k < r1.log.size(); ++k) {
    CHECK(r1.log[k].l_diffusion == r2.log[k].l_diffusion);
    CHECK(r2.log[k].l_pc == 0.0);
  }
  CHECK(r1.log.back().l_pc > 0.0);
  // Only the classifier differs between the two models.
  for (std::size_t i = 0; i < m1.params().size(); ++i) {
    const auto& p = m1.params()[i];
    if (p.name.rfind("cls.", 0) == 0) continue;
    INFO(p.name);
    CHECK(p.value == m2.params()[i].value);
  }
}

TEST_CASE("non-finite loss aborts with the step number and a last-good checkpoint") {
  TempDir tmp("nan");
  const auto data = synthphys::Dataset::open(tiny_dataset(tmp.path));
  auto cfg = tiny_train(50);
  cfg.lr = 1e150;
  auto model = tiny_model(data, cfg);
  try {
    finetune(model, cfg, data, tmp.path / "run");
    FAIL("expected NumericError");
  } catch (const wisa::NumericError& e) {
    CHECK(std::string(e.what()).find("at step ") != std::string::npos);
  }
  REQUIRE(fs::exists(tmp.path / "run" / "last_good.ckpt"));
  const auto restored = backbone::ToyDiT::load(tmp.path / "run" / "last_good.ckpt");
  for (const auto& p : restored.params()) CHECK(p.value.all_finite());
}

TEST_CASE("evaluate: report contents and split leakage") {
  TempDir tmp("eval");
  const auto dir = tiny_dataset(tmp.path);
  const auto data = synthphys::Dataset::open(dir);
  const auto cfg = tiny_train(1);
  const auto model = tiny_model(data, cfg);
  const auto r = evaluate(model, data, 5, 0);
  CHECK(r.clips == data.split("val").size());
  CHECK(r.classification.categories.size() == 29);
  // Fresh module: identity, so the gates cannot matter yet.
  CHECK(r.gate_delta() == 0.0);
  const auto j = to_json(r);
  CHECK(j.contains("macro_f1"));
  CHECK(j["categories"].size() == 29);

  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  auto dup = manifest["clips"][0];
  dup["split"] = dup["split"] == "train" ? "val" : "train";
  manifest["clips"].push_back(dup);
  std::ofstream(dir / "manifest.json") << manifest.dump();
  const auto leaky = synthphys::Dataset::open(dir);
  CHECK_THROWS_AS(evaluate(model, leaky, 5, 0), wisa::DatasetError);
  CHECK_THROWS_AS(finetune(const_cast<backbone::ToyDiT&>(model), cfg, leaky, tmp.path / "x"), wisa::DatasetError);
}

TEST_CASE("attention report and heatmap grid") {
  TempDir tmp("attn");
  const auto data = synthphys::Dataset::open(tiny_dataset(tmp.path));
  const auto cfg = tiny_train(1);
  auto model = tiny_model(data, cfg);
  nc::Rng rng(3);
  wisa::testing::fill_zero_parameters(model.params(), rng);

  const auto& rec = *data.split("val").front();
  const auto clip = data.clip(rec.id);
  const auto r = attention_report(model, clip, data.annotation(rec.id), 5, 9, rec.id);
  CHECK(r.experts.size() == 29);
  for (const auto& e : r.experts) {
    double total = 0.0;
    for (double m : e.key_mass) total += m;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.ratio.has_value() == r.applicable);
  }
  write_attention_pgm(model.config(), r, tmp.path / "a.pgm", 2);
  std::ifstream in(tmp.path / "a.pgm");
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  CHECK(magic == "P2");
  CHECK(maxv == 255);
  CHECK(w == 2 * (2 * 2 + 1) + 1);
  CHECK(h == 30 * (2 * 2 + 1) + 1);
  std::size_t count = 0;
  for (int v; in >> v;) ++count;
  CHECK(count == w * h);

  synthphys::Scenario still;
  still.kind = synthphys::ScenarioKind::Static;
  still.frames = 2;
  still.height = still.width = 4;
  still.radius = 1.0;
  const auto sc = synthphys::generate(still, 1);
  const auto rs = attention_report(model, sc.frames, sc.annotation, 5, 9);
  CHECK_FALSE(rs.applicable);
  CHECK_FALSE(rs.dynamics_ratio().has_value());
  CHECK(to_json(rs)["dynamics_ratio"] == "n/a");
}
