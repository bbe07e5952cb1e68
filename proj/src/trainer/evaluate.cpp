#include "wisa/trainer/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wisa/errors.hpp"
#include "wisa/mopa/mopa.hpp"
#include "wisa/trainer/train.hpp"

namespace wisa::trainer {

namespace fs = std::filesystem;
namespace nc = numcore;

ClassificationReport score_predictions(const std::vector<Probabilities>& probs,
                                       const std::vector<mopa::GatingVector>& targets, double threshold) {
  if (probs.size() != targets.size()) throw DimensionError("score_predictions: one target per prediction expected");
  ClassificationReport r;
  r.samples = probs.size();
  double f1_sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < wisa::kNumCategories; ++c) {
    CategoryScore s;
    s.id = static_cast<int>(c) + 1;
    for (std::size_t n = 0; n < probs.size(); ++n) {
      const bool pred = probs[n][c] > threshold;
      const bool truth = targets[n].values[c] == 1.0;
      if (pred && truth) ++s.tp;
      else if (pred) ++s.fp;
      else if (truth) ++s.fn;
      else ++s.tn;
    }
    const double tp = static_cast<double>(s.tp), fp = static_cast<double>(s.fp), fn = static_cast<double>(s.fn);
    s.precision = s.tp + s.fp > 0 ? tp / (tp + fp) : 0.0;
    s.recall = s.tp + s.fn > 0 ? tp / (tp + fn) : 0.0;
    s.defined = s.tp + s.fp + s.fn > 0;
    s.f1 = s.defined ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    if (s.defined) {
      f1_sum += s.f1;
      ++defined;
    }
    r.categories.push_back(s);
  }
  r.macro_f1 = defined > 0 ? f1_sum / static_cast<double>(defined) : 0.0;
  return r;
}

Probabilities classify_clip(const backbone::ToyDiT& model, const nc::Tensor& clip, const backbone::Conditioning& cond,
                            std::size_t t, std::uint64_t noise_seed) {
  if (!model.has_physical_module()) throw UsageError("classify: the model has no physical classifier");
  nc::Rng rng(noise_seed);
  const nc::Tensor eps = rng.normal_tensor(clip.shape());
  const nc::Tensor x_t = model.schedule().q_sample(clip, t, eps);
  nc::Tape tape;
  nc::Binding bind(tape, model.params(), nc::BindMode::Constant);
  const auto out = model.forward(bind, tape.constant(x_t), t, cond);
  const auto cls = physmodule::classify(bind, model.classifier(), out.feature);
  Probabilities p{};
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = cls.probs.value()[c];
  return p;
}

EvalReport evaluate(const backbone::ToyDiT& model, const synthphys::Dataset& data, std::size_t eval_timestep,
                    std::uint64_t seed, std::size_t max_clips) {
  data.check_disjoint();
  if (eval_timestep >= model.config().diffusion_steps) throw UsageError("evaluate: eval timestep out of range");
  auto val = data.split("val");
  if (max_clips > 0 && val.size() > max_clips) val.resize(max_clips);
  if (val.empty()) throw DatasetError("val split is empty");
  EvalReport r;
  r.clips = val.size();
  std::vector<Probabilities> probs;
  std::vector<mopa::GatingVector> targets;
  for (std::size_t k = 0; k < val.size(); ++k) {
    const auto a = data.annotation(val[k]->id);
    const auto clip = data.clip(val[k]->id);
    probs.push_back(classify_clip(model, clip, model.make_conditioning(a), eval_timestep,
                                  nc::Rng::derive(seed, 40000 + k).next_u64()));
    targets.push_back(physchema::to_gating_vector(a.qualitative));
  }
  r.classification = score_predictions(probs, targets);
  r.val_loss_true = validation_loss(model, data, val, seed);
  r.val_loss_ones = validation_loss(model, data, val, seed, mopa::GatingVector::ones());
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& s : r.classification.categories) {
    cats.push_back({{"id", s.id},
                    {"name", physchema::category(s.id).name},
                    {"tp", s.tp},
                    {"fp", s.fp},
                    {"fn", s.fn},
                    {"tn", s.tn},
                    {"precision", s.precision},
                    {"recall", s.recall},
                    {"f1", s.f1},
                    {"defined", s.defined}});
  }
  return {{"clips", r.clips},
          {"macro_f1", r.classification.macro_f1},
          {"val_loss_true_gates", r.val_loss_true},
          {"val_loss_all_ones", r.val_loss_ones},
          {"gate_delta", r.gate_delta()},
          {"categories", cats}};
}

std::vector<bool> motion_mask(const backbone::ToyDiTConfig& cfg, const nc::Tensor& clip, double threshold) {
  if (clip.shape() != nc::Shape{cfg.frames, cfg.height, cfg.width})
    throw DimensionError("motion_mask: clip does not match the model geometry");
  const std::size_t plane = cfg.height * cfg.width;
  std::vector<bool> pixel(clip.size(), false);
  for (std::size_t f = 1; f < cfg.frames; ++f)
    for (std::size_t k = 0; k < plane; ++k)
      if (std::abs(clip[f * plane + k] - clip[(f - 1) * plane + k]) > threshold)
        pixel[f * plane + k] = pixel[(f - 1) * plane + k] = true;
  const auto index = cfg.patch_index();
  const std::size_t pd = cfg.patch_dim();
  std::vector<bool> mask(cfg.tokens(), false);
  for (std::size_t i = 0; i < mask.size(); ++i)
    for (std::size_t k = 0; k < pd && !mask[i]; ++k) mask[i] = pixel[index[i * pd + k]];
  return mask;
}

std::optional<double> localization_ratio(const nc::Tensor& attention, const std::vector<bool>& mask) {
  if (attention.rank() != 2 || attention.dim(0) != mask.size() || attention.dim(1) != mask.size())
    throw DimensionError("localization_ratio: attention must be (N, N) with N mask entries");
  const std::size_t n = mask.size();
  const auto moving = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (moving == 0) return std::nullopt;
  double mass = 0.0;
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k)
      if (mask[k]) mass += attention.at(q, k);
  mass /= static_cast<double>(n);
  return mass / (static_cast<double>(moving) / static_cast<double>(n));
}

std::optional<double> AttentionReport::dynamics_ratio() const {
  if (!applicable) return std::nullopt;
  const auto& dyn = physchema::group_info(physchema::Group::Dynamics);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& e : experts) {
    if (e.category < dyn.first_id || e.category > dyn.last_id || e.category == dyn.fallback_id) continue;
    if (e.gate != 1.0 || !e.ratio) continue;
    sum += *e.ratio;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

AttentionReport attention_report(const backbone::ToyDiT& model, const nc::Tensor& clip,
                                 const physchema::PhysicalAnnotation& annotation, std::size_t t,
                                 std::uint64_t noise_seed, const std::string& clip_id) {
  if (!model.has_physical_module()) throw UsageError("attention_report: the model has no Physical Module");
  const auto& cfg = model.config();
  AttentionReport r;
  r.clip_id = clip_id;
  r.timestep = t;
  r.mask = motion_mask(cfg, clip);
  const auto moving = static_cast<std::size_t>(std::count(r.mask.begin(), r.mask.end(), true));
  r.applicable = moving > 0;
  r.motion_fraction = static_cast<double>(moving) / static_cast<double>(r.mask.size());

  const auto cond = model.make_conditioning(annotation);
  nc::Rng rng(noise_seed);
  const nc::Tensor eps = rng.normal_tensor(clip.shape());
  const nc::Tensor x_t = model.schedule().q_sample(clip, t, eps);
  nc::Tape tape;
  nc::Binding bind(tape, model.params(), nc::BindMode::Constant);
  const auto out = model.forward(bind, tape.constant(x_t), t, cond);
  const auto maps = mopa::attention_maps(out.trace.entry.value(), model.physical_module().mopa_weights(model.params()));

  const std::size_t n = r.mask.size();
  for (std::size_t h = 0; h < maps.size(); ++h) {
    ExpertReport e;
    e.category = static_cast<int>(h) + 1;
    e.gate = cond.gate.values[h];
    e.ratio = localization_ratio(maps[h], r.mask);
    e.key_mass.assign(n, 0.0);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = 0; k < n; ++k) e.key_mass[k] += maps[h].at(q, k) / static_cast<double>(n);
    r.experts.push_back(std::move(e));
  }
  return r;
}

nlohmann::json to_json(const AttentionReport& r) {
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : r.experts) {
    nlohmann::json j = {{"category", e.category}, {"name", physchema::category(e.category).name}, {"gate", e.gate}};
    j["ratio"] = e.ratio ? nlohmann::json(*e.ratio) : nlohmann::json("n/a");
    experts.push_back(std::move(j));
  }
  nlohmann::json out = {{"clip", r.clip_id},
                        {"timestep", r.timestep},
                        {"applicable", r.applicable},
                        {"motion_fraction", r.motion_fraction},
                        {"experts", experts}};
  const auto d = r.dynamics_ratio();
  out["dynamics_ratio"] = d ? nlohmann::json(*d) : nlohmann::json("n/a");
  return out;
}

void write_attention_pgm(const backbone::ToyDiTConfig& cfg, const AttentionReport& r, const fs::path& path,
                         std::size_t cell) {
  if (cell == 0) throw UsageError("write_attention_pgm: cell must be positive");
  const std::size_t gf = cfg.grid_frames(), gh = cfg.grid_height(), gw = cfg.grid_width();
  const std::size_t tile_w = gw * cell + 1, tile_h = gh * cell + 1;
  const std::size_t rows = 1 + r.experts.size();
  const std::size_t width = gf * tile_w + 1, height = rows * tile_h + 1;
  std::vector<int> img(width * height, 0);

  // Row 0 is the motion mask; row 1 + h is expert h scaled by its own maximum.
  const auto paint_row = [&](std::size_t row, const std::vector<double>& values) {
    double hi = 0.0;
    for (double v : values) hi = std::max(hi, v);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t f = i / (gh * gw), y = (i / gw) % gh, x = i % gw;
      const int level = hi > 0.0 ? static_cast<int>(std::lround(255.0 * values[i] / hi)) : 0;
      for (std::size_t dy = 0; dy < cell; ++dy)
        for (std::size_t dx = 0; dx < cell; ++dx) {
          const std::size_t py = row * tile_h + 1 + y * cell + dy;
          const std::size_t px = f * tile_w + 1 + x * cell + dx;
          img[py * width + px] = level;
        }
    }
  };
  std::vector<double> mask(r.mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.mask[i] ? 1.0 : 0.0;
  paint_row(0, mask);
  for (std::size_t h = 0; h < r.experts.size(); ++h) paint_row(1 + h, r.experts[h].key_mass);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P2\n" << width << ' ' << height << "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out << img[y * width + x] << (x + 1 == width ? '\n' : ' ');
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace wisa::trainer
