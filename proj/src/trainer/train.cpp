#include "wisa/trainer/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "wisa/errors.hpp"
#include "wisa/mopa/mopa.hpp"
#include "wisa/numcore/ops.hpp"
#include "wisa/trainer/loss.hpp"
#include "wisa/trainer/optimizer.hpp"

namespace wisa::trainer {

namespace fs = std::filesystem;
namespace nc = numcore;
using backbone::Conditioning;
using backbone::ToyDiT;

namespace {

// Rng streams derived from TrainConfig::seed.
enum Stream : std::uint64_t {
  kOrder = 10,
  kNoise = 11,
  kGate = 12,
  kPretrainOrder = 20,
  kPretrainNoise = 21,
  kValidation = 30,
};

#define WISA_TRAIN_FIELDS(X)                                                                                    \
  X(steps) X(lr) X(batch) X(lambda) X(perturb_prob) X(seed) X(lora_rank) X(lora_alpha) X(classifier)            \
      X(pretrain_steps) X(pretrain_lr) X(val_every) X(val_clips) X(val_timesteps) X(eval_timestep)

template <class T>
void read_field(const nlohmann::json& v, T& out, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ParseError(where, "expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) throw ParseError(where, "expected a nonnegative integer");
  } else {
    if (!v.is_number()) throw ParseError(where, "expected a number");
  }
  out = v.get<T>();
}

struct TrainItem {
  nc::Tensor clip;
  Conditioning cond;
  mopa::GatingVector target;
};

std::vector<TrainItem> load_items(const ToyDiT& model, const synthphys::Dataset& data,
                                  const std::vector<const synthphys::ClipRecord*>& recs) {
  std::vector<TrainItem> items;
  items.reserve(recs.size());
  const auto& cfg = model.config();
  for (const auto* r : recs) {
    TrainItem it;
    it.clip = data.clip(r->id);
    if (it.clip.shape() != nc::Shape{cfg.frames, cfg.height, cfg.width})
      throw DimensionError("clip " + r->id + " does not match the model geometry");
    const auto a = data.annotation(r->id);
    it.cond = model.make_conditioning(a);
    it.target = physchema::to_gating_vector(a.qualitative);
    items.push_back(std::move(it));
  }
  return items;
}

// Epoch-shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, nc::Rng rng) : n_(n), rng_(rng) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
      for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  nc::Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::ofstream open_log(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::vector<nc::Tensor> gradients(const nc::Binding& bind, const nc::ParameterSet& params) {
  std::vector<nc::Tensor> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable) g[i] = bind.grad(i);
  return g;
}

std::vector<const synthphys::ClipRecord*> validation_subset(const synthphys::Dataset& data, std::size_t limit) {
  auto val = data.split("val");
  if (limit > 0 && val.size() > limit) val.resize(limit);
  return val;
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

void pretrain(ToyDiT& model, const TrainConfig& cfg, const std::vector<TrainItem>& items, const fs::path& out_dir) {
  auto& params = model.params();
  for (auto& p : params) p.trainable = !starts_with(p.name, "phys.") && !starts_with(p.name, "cls.");
  Adam opt(params, cfg.pretrain_lr);
  BatchSampler sampler(items.size(), nc::Rng::derive(cfg.seed, kPretrainOrder));
  nc::Rng noise = nc::Rng::derive(cfg.seed, kPretrainNoise);
  auto log = open_log(out_dir / "pretrain.jsonl");
  for (std::size_t step = 1; step <= cfg.pretrain_steps; ++step) {
    nc::Tape tape;
    nc::Binding bind(tape, params, nc::BindMode::Trainable);
    std::vector<nc::Var> losses;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& it = items[sampler.next()];
      losses.push_back(backbone::diffusion_loss(model, bind, it.clip, it.cond, noise).loss);
    }
    const nc::Var loss = nc::scale(nc::sum(nc::concat(losses)), 1.0 / static_cast<double>(cfg.batch));
    const double value = loss.value()[0];
    if (!std::isfinite(value))
      throw NumericError("non-finite diffusion loss at pretraining step " + std::to_string(step));
    tape.backward(loss);
    opt.step(gradients(bind, params));
    log << nlohmann::json{{"step", step}, {"l_diffusion", value}}.dump() << '\n';
  }
  for (auto& p : params) p.trainable = false;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps == 0) throw UsageError("train.steps must be positive");
  if (!(lr > 0.0)) throw UsageError("train.lr must be positive");
  if (batch == 0) throw UsageError("train.batch must be positive");
  if (!(lambda >= 0.0)) throw UsageError("train.lambda must be nonnegative");
  if (!(perturb_prob >= 0.0 && perturb_prob <= 1.0)) throw UsageError("train.perturb_prob must lie in [0, 1]");
  if (lora_rank == 0) throw UsageError("train.lora_rank must be positive");
  if (!(lora_alpha > 0.0)) throw UsageError("train.lora_alpha must be positive");
  if (pretrain_steps > 0 && !(pretrain_lr > 0.0)) throw UsageError("train.pretrain_lr must be positive");
  if (val_every == 0) throw UsageError("train.val_every must be positive");
  if (val_timesteps == 0) throw UsageError("train.val_timesteps must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
#define X(name) j[#name] = c.name;
  WISA_TRAIN_FIELDS(X)
#undef X
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    const std::string where = path + "." + key;
    bool known = false;
#define X(name)                             \
  if (key == #name) {                       \
    read_field(value, c.name, where);       \
    known = true;                           \
  }
    WISA_TRAIN_FIELDS(X)
#undef X
    if (!known) throw ParseError(where, "unknown key");
  }
  return c;
}

#undef WISA_TRAIN_FIELDS

backbone::Vocabulary build_vocabulary(const synthphys::Dataset& data) {
  std::vector<std::string> corpus;
  for (const auto* r : data.split("train")) {
    const auto a = data.annotation(r->id);
    corpus.push_back(a.caption);
    corpus.push_back(a.physical_description);
  }
  return backbone::Vocabulary::build(corpus);
}

double validation_loss(const ToyDiT& model, const synthphys::Dataset& data,
                       const std::vector<const synthphys::ClipRecord*>& clips, std::uint64_t seed,
                       std::optional<mopa::GatingVector> gate_override, std::size_t levels) {
  if (clips.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (levels == 0) throw UsageError("validation_loss: levels must be positive");
  const std::size_t T = model.config().diffusion_steps;
  const std::uint64_t base = nc::Rng::derive(seed, kValidation).next_u64();
  double total = 0.0;
  for (std::size_t k = 0; k < clips.size(); ++k) {
    const auto clip = data.clip(clips[k]->id);
    auto cond = model.make_conditioning(data.annotation(clips[k]->id));
    if (gate_override) cond.gate = *gate_override;
    nc::Rng rng = nc::Rng::derive(base, k);
    const double offset = rng.uniform();
    for (std::size_t j = 0; j < levels; ++j) {
      const auto t = std::min(T - 1, static_cast<std::size_t>((static_cast<double>(j) + offset) *
                                                             static_cast<double>(T) / static_cast<double>(levels)));
      nc::Tape tape;
      nc::Binding bind(tape, model.params(), nc::BindMode::Constant);
      total += backbone::diffusion_loss(model, bind, clip, cond, rng, t).loss.value()[0];
    }
  }
  return total / static_cast<double>(clips.size() * levels);
}

TrainResult finetune(ToyDiT& model, const TrainConfig& cfg, const synthphys::Dataset& data, const fs::path& out_dir) {
  cfg.validate();
  data.check_disjoint();
  if (!model.lora()) throw UsageError("finetune: add adapters to the model first");
  if (cfg.classifier && !model.has_physical_module())
    throw UsageError("finetune: the classifier needs a model with a Physical Module");
  const auto train_recs = data.split("train");
  if (train_recs.empty()) throw DatasetError("train split is empty");
  const auto items = load_items(model, data, train_recs);
  const auto val_recs = validation_subset(data, cfg.val_clips);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto& params = model.params();
  Adam opt(params, cfg.lr);
  BatchSampler sampler(items.size(), nc::Rng::derive(cfg.seed, kOrder));
  nc::Rng noise = nc::Rng::derive(cfg.seed, kNoise);
  nc::Rng gate_rng = nc::Rng::derive(cfg.seed, kGate);

  TrainResult result;
  result.metrics_log = out_dir / "metrics.jsonl";
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_val_loss = std::numeric_limits<double>::infinity();
  auto metrics = open_log(result.metrics_log);
  auto validation = open_log(out_dir / "validation.jsonl");
  const auto extra = [&](std::size_t step, double val) {
    return nlohmann::json{{"step", step}, {"val_loss", val}, {"train", to_json(cfg)}};
  };

  std::vector<nc::Tensor> snapshot(params.size());
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    nc::Tape tape;
    nc::Binding bind(tape, params, nc::BindMode::Trainable);
    // Layers raise NumericError on non-finite activations; both paths abort the same way.
    const auto batch_loss = [&]() -> std::optional<LossBundle> {
      std::vector<nc::Var> diffs;
      std::vector<physmodule::ClassifierOutput> outs;
      std::vector<mopa::GatingVector> targets;
      try {
        for (std::size_t b = 0; b < cfg.batch; ++b) {
          const auto& it = items[sampler.next()];
          Conditioning cond = it.cond;
          cond.gate = mopa::perturb(it.cond.gate, cfg.perturb_prob, gate_rng);
          const auto s = backbone::diffusion_loss(model, bind, it.clip, cond, noise);
          diffs.push_back(s.loss);
          if (cfg.classifier) {
            outs.push_back(physmodule::classify(bind, model.classifier(), s.out.feature));
            targets.push_back(it.target);
          }
        }
        const nc::Var l_diff = nc::scale(nc::sum(nc::concat(diffs)), 1.0 / static_cast<double>(cfg.batch));
        const nc::Var l_pc =
            cfg.classifier ? physmodule::bce_multilabel(outs, targets) : tape.constant(nc::Tensor::scalar(0.0));
        auto loss = combine(l_diff, l_pc, cfg.lambda);
        if (!std::isfinite(loss.l_total.value()[0])) return std::nullopt;
        return loss;
      } catch (const NumericError&) {
        return std::nullopt;
      }
    }();

    if (!batch_loss) {
      if (step > 1)
        for (std::size_t i = 0; i < params.size(); ++i)
          if (params[i].trainable) params[i].value = snapshot[i];
      const auto path = out_dir / "last_good.ckpt";
      model.save(path, extra(step - 1, std::numeric_limits<double>::quiet_NaN()));
      throw NumericError("non-finite loss at step " + std::to_string(step) + "; last good checkpoint " +
                         path.string());
    }
    const auto& loss = *batch_loss;
    const StepMetrics row{step, loss.l_diffusion.value()[0], loss.l_pc.value()[0], loss.l_total.value()[0]};
    tape.backward(loss.l_total);
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].trainable) snapshot[i] = params[i].value;
    opt.step(gradients(bind, params));

    result.log.push_back(row);
    metrics << nlohmann::json{{"step", row.step}, {"l_diffusion", row.l_diffusion}, {"l_pc", row.l_pc},
                              {"l_total", row.l_total}}
                   .dump()
            << '\n';

    if (!val_recs.empty() && (step % cfg.val_every == 0 || step == cfg.steps)) {
      const double v = validation_loss(model, data, val_recs, cfg.seed, {}, cfg.val_timesteps);
      validation << nlohmann::json{{"step", step}, {"val_loss", v}}.dump() << '\n';
      if (v < result.best_val_loss) {
        result.best_val_loss = v;
        result.best_step = step;
        model.save(result.best_checkpoint, extra(step, v));
      }
    }
  }
  result.steps = cfg.steps;
  model.save(result.last_checkpoint, extra(cfg.steps, result.best_val_loss));
  if (val_recs.empty()) {
    result.best_step = cfg.steps;
    model.save(result.best_checkpoint, extra(cfg.steps, result.best_val_loss));
  }
  metrics.flush();
  if (!metrics) throw IoError("write failed: " + result.metrics_log.string());
  return result;
}

TrainResult train(const backbone::ToyDiTConfig& model_cfg, const TrainConfig& cfg, const synthphys::Dataset& data,
                  const fs::path& out_dir) {
  cfg.validate();
  model_cfg.validate();
  data.check_disjoint();
  auto model = ToyDiT::create(model_cfg, build_vocabulary(data), cfg.seed);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (cfg.pretrain_steps > 0) {
    const auto recs = data.split("train");
    if (recs.empty()) throw DatasetError("train split is empty");
    pretrain(model, cfg, load_items(model, data, recs), out_dir);
  }
  model.add_lora(cfg.lora_rank, cfg.lora_alpha, cfg.seed);
  return finetune(model, cfg, data, out_dir);
}

}  // namespace wisa::trainer
