#include "wisa/backbone/model.hpp"

#include <cmath>

#include "wisa/errors.hpp"
#include "wisa/numcore/ops.hpp"
#include "wisa/physchema/categories.hpp"
#include "wisa/physmodule/checkpoint.hpp"

namespace wisa::backbone {

namespace nc = numcore;
using nc::Tensor;

Var LinearLayer::apply(Binding& bind, Var x) const {
  Var y = nc::linear(x, bind(w), bind(b));
  if (lora_a) {
    Var delta = nc::matmul(nc::matmul(x, bind(*lora_a)), bind(*lora_b));
    y = nc::add(y, nc::scale(delta, lora_scale));
  }
  return y;
}

namespace {

Tensor scaled_normal(Rng& rng, std::size_t in, std::size_t out, double gain = 1.0) {
  return rng.normal_tensor({in, out}, gain / std::sqrt(static_cast<double>(in)));
}

LinearLayer make_linear(ParameterSet& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                        double gain = 1.0) {
  LinearLayer l;
  l.w = p.add(name + ".w", scaled_normal(rng, in, out, gain));
  l.b = p.add(name + ".b", Tensor({out}));
  return l;
}

// Slices a rank-1 modulation vector into `count` consecutive chunks of width d.
std::vector<Var> chunks(Var mods, std::size_t count, std::size_t d) {
  std::vector<Var> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(nc::slice(mods, i * d, d));
  return out;
}

Var modulate(Var x, Var shift, Var scale) {
  return nc::add_row(nc::mul_row(nc::layer_norm(x), nc::add_scalar(scale, 1.0)), shift);
}

}  // namespace

Tensor sinusoidal_embedding(std::size_t t, std::size_t width) {
  if (width < 2 || width % 2 != 0) throw UsageError("sinusoidal_embedding: width must be even");
  const std::size_t half = width / 2;
  Tensor out({width});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::cos(static_cast<double>(t) * freq);
    out[half + i] = std::sin(static_cast<double>(t) * freq);
  }
  return out;
}

ToyDiT ToyDiT::create(const ToyDiTConfig& config, Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  ToyDiT m;
  m.config_ = config;
  m.vocab_ = std::move(vocab);
  m.schedule_ = NoiseSchedule::linear(config.diffusion_steps);
  m.patch_index_ = config.patch_index();
  m.unpatch_index_.assign(config.clip_size(), 0);
  for (std::size_t i = 0; i < m.patch_index_.size(); ++i) m.unpatch_index_[m.patch_index_[i]] = i;

  const std::size_t d = config.model_dim;
  auto& p = m.params_;
  Rng rng = Rng::derive(seed, 1);
  m.patch_embed_ = make_linear(p, rng, "embed", config.patch_dim(), d);
  m.pos_embed_ = p.add("pos", rng.normal_tensor({config.tokens(), d}, 0.1));
  m.time_in_ = make_linear(p, rng, "time.in", config.time_freq_dim, d);
  m.time_out_ = make_linear(p, rng, "time.out", d, d);
  m.text_table_ = p.add("text.table", rng.normal_tensor({m.vocab_.size(), d}));
  m.text_proj_ = make_linear(p, rng, "text.proj", d, d);
  for (std::size_t i = 0; i < config.n_blocks; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    DiTBlock blk;
    blk.ada = make_linear(p, rng, pre + "ada", d, 6 * d, 0.1);
    blk.qkv = make_linear(p, rng, pre + "qkv", d, 3 * d);
    blk.proj = make_linear(p, rng, pre + "proj", d, d);
    blk.fc1 = make_linear(p, rng, pre + "fc1", d, config.mlp_ratio * d);
    blk.fc2 = make_linear(p, rng, pre + "fc2", config.mlp_ratio * d, d);
    m.blocks_.push_back(blk);
  }
  m.final_ada_ = make_linear(p, rng, "final.ada", d, 2 * d, 0.1);
  m.final_out_ = make_linear(p, rng, "final.out", d, config.patch_dim());

  if (config.physical_module) {
    Rng mrng = Rng::derive(seed, 2);
    physmodule::PhysicalModuleConfig pc;
    pc.model_dim = d;
    pc.head_dim = config.phys_head_dim;
    pc.quant_width = config.quant_width;
    pc.timestep_width = d;
    m.module_ = physmodule::PhysicalModule::create(p, pc, mrng);
    m.classifier_ = physmodule::Classifier::create(p, d);
  }
  return m;
}

void ToyDiT::set_schedule(NoiseSchedule s) {
  if (s.steps() != config_.diffusion_steps)
    throw UsageError("schedule has " + std::to_string(s.steps()) + " steps, model expects " +
                     std::to_string(config_.diffusion_steps));
  schedule_ = std::move(s);
}

const physmodule::PhysicalModule& ToyDiT::physical_module() const {
  if (!module_) throw UsageError("model has no Physical Module");
  return *module_;
}

const physmodule::Classifier& ToyDiT::classifier() const {
  if (!classifier_) throw UsageError("model has no physical classifier");
  return *classifier_;
}

Conditioning ToyDiT::make_conditioning(const physchema::PhysicalAnnotation& a) const {
  Conditioning c;
  c.text = concat_conditioning(vocab_, a.caption, a.physical_description, config_.max_text_len);
  c.gate = physchema::to_gating_vector(a.qualitative);
  c.quant = a.quantitative;
  return c;
}

Var ToyDiT::timestep_embedding(Binding& bind, std::size_t t) const {
  const std::size_t d = config_.model_dim;
  Var f = bind.tape().constant(sinusoidal_embedding(t, config_.time_freq_dim).reshaped({1, config_.time_freq_dim}));
  Var h = nc::silu(time_in_.apply(bind, f));
  return nc::reshape(time_out_.apply(bind, h), {d});
}

DenoiseResult ToyDiT::forward(Binding& bind, Var x_t, std::size_t t, const Conditioning& cond) const {
  const auto& cfg = config_;
  const std::size_t d = cfg.model_dim, n = cfg.tokens();
  if (x_t.shape() != nc::Shape{cfg.frames, cfg.height, cfg.width})
    throw DimensionError("denoise: clip " + nc::shape_to_string(x_t.shape()) + ", model expects " +
                         nc::shape_to_string({cfg.frames, cfg.height, cfg.width}));
  if (t >= cfg.diffusion_steps)
    throw UsageError("denoise: timestep " + std::to_string(t) + " outside [0, " + std::to_string(cfg.diffusion_steps) + ")");
  if (cond.text.ids.empty()) throw UsageError("denoise: empty text conditioning");

  Var patches = nc::gather(x_t, patch_index_, {n, cfg.patch_dim()});
  Var h = nc::add(patch_embed_.apply(bind, patches), bind(pos_embed_));

  Var temb = timestep_embedding(bind, t);
  Var text = nc::mean_rows(nc::gather_rows(bind(text_table_), cond.text.ids));
  text = nc::reshape(text_proj_.apply(bind, nc::reshape(text, {1, d})), {d});
  Var c_act = nc::reshape(nc::silu(nc::add(temb, text)), {1, d});

  for (const auto& blk : blocks_) {
    const auto m = chunks(nc::reshape(blk.ada.apply(bind, c_act), {6 * d}), 6, d);
    Var qkv = blk.qkv.apply(bind, modulate(h, m[0], m[1]));
    Var att = nc::multi_head_attention(nc::slice_cols(qkv, 0, d), nc::slice_cols(qkv, d, d),
                                       nc::slice_cols(qkv, 2 * d, d), cfg.n_heads);
    h = nc::add(h, nc::mul_row(blk.proj.apply(bind, att), m[2]));
    Var mlp = blk.fc2.apply(bind, nc::gelu(blk.fc1.apply(bind, modulate(h, m[3], m[4]))));
    h = nc::add(h, nc::mul_row(mlp, m[5]));
  }

  DenoiseResult r;
  r.block_output = h;
  if (module_) {
    r.module_cond = physmodule::embed_quantitative(bind, *module_, cond.quant, temb);
    h = physmodule::physical_module_forward(bind, *module_, h, cond.gate, r.module_cond, &r.trace);
  }
  r.feature = h;

  const auto fm = chunks(nc::reshape(final_ada_.apply(bind, c_act), {2 * d}), 2, d);
  Var out = final_out_.apply(bind, modulate(h, fm[0], fm[1]));
  r.noise = nc::gather(out, unpatch_index_, {cfg.frames, cfg.height, cfg.width});
  return r;
}

Tensor ToyDiT::denoise(const Tensor& x_t, std::size_t t, const Conditioning& cond) const {
  nc::Tape tape;
  Binding bind(tape, params_, nc::BindMode::Constant);
  return forward(bind, tape.constant(x_t), t, cond).noise.value();
}

LoraReport ToyDiT::add_lora(std::size_t rank, double alpha, std::uint64_t seed) {
  if (lora_) throw UsageError("add_lora: adapters already present");
  if (rank == 0) throw UsageError("add_lora: rank must be at least 1");
  if (!(alpha > 0.0)) throw UsageError("add_lora: alpha must be positive");
  Rng rng = Rng::derive(seed, 3);
  LoraReport rep;
  rep.rank = rank;
  rep.alpha = alpha;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& blk = blocks_[i];
    const std::pair<LinearLayer*, const char*> layers[] = {
        {&blk.qkv, "qkv"}, {&blk.proj, "proj"}, {&blk.fc1, "fc1"}, {&blk.fc2, "fc2"}};
    for (auto [layer, name] : layers) {
      const std::size_t in = params_[layer->w].value.dim(0), out = params_[layer->w].value.dim(1);
      const std::string pre = "blocks." + std::to_string(i) + "." + name + ".lora_";
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      layer->lora_a = params_.add(pre + "a", rng.uniform_tensor({in, rank}, -bound, bound));
      layer->lora_b = params_.add(pre + "b", Tensor({rank, out}));
      layer->lora_scale = alpha / static_cast<double>(rank);
      rep.added_parameters += rank * (in + out);
      ++rep.adapted_layers;
    }
  }
  for (auto& p : params_) {
    const bool adapter = p.name.find(".lora_") != std::string::npos;
    const bool module = p.name.starts_with("phys.") || p.name.starts_with("cls.");
    p.trainable = adapter || module;
  }
  rep.total_parameters = params_.scalar_count();
  lora_ = rep;
  return rep;
}

std::vector<std::string> ToyDiT::trainable_parameters() const {
  std::vector<std::string> names;
  for (const auto& p : params_)
    if (p.trainable) names.push_back(p.name);
  return names;
}

nlohmann::json ToyDiT::metadata() const {
  nlohmann::json j;
  j["config"] = config_;
  j["vocab"] = vocab_.to_json();
  j["lora"] = lora_ ? nlohmann::json{{"rank", lora_->rank}, {"alpha", lora_->alpha}} : nlohmann::json(nullptr);
  return j;
}

void ToyDiT::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json meta = metadata();
  meta["extra"] = extra;
  physmodule::save_checkpoint(path, params_, meta);
}

ToyDiT ToyDiT::load(const std::filesystem::path& path, nlohmann::json* extra) {
  const auto header = physmodule::read_checkpoint_header(path);
  const auto& meta = header.at("metadata");
  ToyDiTConfig cfg;
  try {
    cfg = meta.at("config").get<ToyDiTConfig>();
  } catch (const ParseError& e) {
    throw ParseError(path.string(), std::string("metadata.config: ") + e.what());
  }
  ToyDiT m = create(cfg, Vocabulary::from_json(meta.at("vocab")), 0);
  if (!meta.at("lora").is_null()) m.add_lora(meta["lora"].at("rank").get<std::size_t>(), meta["lora"].at("alpha").get<double>(), 0);
  physmodule::load_checkpoint(path, m.params_);
  if (extra) *extra = meta.value("extra", nlohmann::json::object());
  return m;
}

DiffusionSample diffusion_loss(const ToyDiT& model, Binding& bind, const Tensor& clip, const Conditioning& cond,
                               Rng& rng, std::optional<std::size_t> forced_t) {
  for (double v : clip.data()) {
    if (!(v >= -1.0 && v <= 1.0)) throw UsageError("diffusion_loss: clip values must lie in [-1, 1]");
  }
  DiffusionSample s;
  s.t = forced_t ? *forced_t : rng.below(model.config().diffusion_steps);
  const Tensor eps = rng.normal_tensor(clip.shape());
  const Tensor x_t = model.schedule().q_sample(clip, s.t, eps);
  auto& tape = bind.tape();
  s.out = model.forward(bind, tape.constant(x_t), s.t, cond);
  s.loss = nc::mse(s.out.noise, tape.constant(eps));
  return s;
}

Tensor sample(const ToyDiT& model, const Conditioning& cond, std::size_t steps, Rng& rng) {
  const auto& cfg = model.config();
  const auto plan = model.schedule().respace(steps);
  Tensor x = rng.normal_tensor({cfg.frames, cfg.height, cfg.width});
  for (std::size_t i = steps; i-- > 0;) {
    const Tensor eps = model.denoise(x, plan.timesteps[i], cond);
    const double prev = i == 0 ? 1.0 : plan.alpha_bars[i - 1];
    const auto step = posterior_step(x, eps, plan.betas[i], plan.alpha_bars[i], prev);
    x = step.mean;
    if (i > 0) {
      const Tensor z = rng.normal_tensor(x.shape());
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += step.stddev * z[k];
    }
  }
  for (double& v : x.data()) v = std::clamp(v, -1.0, 1.0);
  return x;
}

}  // namespace wisa::backbone
