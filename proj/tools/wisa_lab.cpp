#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wisa/cli/commands.hpp"
#include "wisa/errors.hpp"

namespace {

using wisa::cli::RunConfig;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> steps;
  std::optional<double> lambda;
  std::optional<double> perturb_prob;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : wisa::cli::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.steps) c.train.steps = *o.steps;
  if (o.lambda) c.train.lambda = *o.lambda;
  if (o.perturb_prob) c.train.perturb_prob = *o.perturb_prob;
  c.train.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wisa-lab: physics-conditioned toy video diffusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  Overrides o;
  std::string gate = "true";
  bool lenient = false;
  std::string checkpoint, data_dir, clip_id, prompts;
  std::size_t timestep = 10, sample_steps = 50;
  std::vector<std::string> files;

  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  };
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Seed (u64)"); };

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset");
  add_config(gen);
  add_seed(gen);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the model (generates the dataset if missing)");
  add_config(train);
  add_seed(train);
  train->add_option("--out", o.out, "Run directory");
  train->add_option("--steps", o.steps, "Fine-tuning steps");
  train->add_option("--lambda", o.lambda, "Weight of the classifier loss");
  train->add_option("--perturb-prob", o.perturb_prob, "Gate perturbation probability");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on the val split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  add_seed(eval);
  eval->add_option("--timestep", timestep, "Noise level for classification")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Sample clips from prompts");
  sample->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("--prompts", prompts, "JSON annotation or list of annotations")->required();
  sample->add_option("--out", o.out, "Output directory")->required();
  add_seed(sample);
  sample->add_option("--sample-steps", sample_steps, "Denoising steps")->capture_default_str();
  sample->add_option("--gate", gate, "Expert gates: all-ones|true|zero")->capture_default_str()->check(CLI::IsMember({"all-ones", "true", "zero"}));

  auto* classify = app.add_subcommand("classify", "Run the physical classifier on a dataset clip");
  classify->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  classify->add_option("--data", data_dir, "Dataset directory")->required();
  classify->add_option("--clip", clip_id, "Clip id")->required();
  add_seed(classify);
  classify->add_option("--timestep", timestep, "Noise level")->capture_default_str();
  classify->add_option("--gate", gate, "Expert gates: all-ones|true|zero")->capture_default_str()->check(CLI::IsMember({"all-ones", "true", "zero"}));

  auto* attn = app.add_subcommand("inspect-attn", "Per-expert attention maps and localization ratios");
  attn->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  attn->add_option("--data", data_dir, "Dataset directory")->required();
  attn->add_option("--clip", clip_id, "Clip id")->required();
  attn->add_option("--out", o.out, "Output directory")->required();
  add_seed(attn);
  attn->add_option("--timestep", timestep, "Noise level")->capture_default_str();

  auto* validate = app.add_subcommand("validate", "Check annotation files");
  validate->add_option("files", files, "Annotation JSON files")->required();
  auto* strict_flag = validate->add_flag("--strict", "Apply the group rules (default)");
  validate->add_flag("--lenient", lenient, "Skip the group rules")->excludes(strict_flag);

  auto* stats = app.add_subcommand("stats", "Branch and kind counts of a dataset");
  stats->add_option("--data", data_dir, "Dataset directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::uint64_t seed = o.seed.value_or(0);
    if (gen->parsed()) {
      const auto cfg = resolve(o);
      wisa::cli::cmd_gen_data(cfg, *o.out, std::cout);
    } else if (train->parsed()) {
      wisa::cli::cmd_train(resolve(o), std::cout);
    } else if (eval->parsed()) {
      wisa::cli::cmd_evaluate(checkpoint, data_dir, seed, timestep, std::cout);
    } else if (sample->parsed()) {
      wisa::cli::cmd_sample(checkpoint, prompts, *o.out, seed, sample_steps, wisa::cli::parse_gate_mode(gate),
                            std::cout);
    } else if (classify->parsed()) {
      std::cout << wisa::cli::cmd_classify(checkpoint, data_dir, clip_id, seed, timestep,
                                           wisa::cli::parse_gate_mode(gate), std::cerr)
                       .dump(2)
                << '\n';
    } else if (attn->parsed()) {
      wisa::cli::cmd_inspect_attn(checkpoint, data_dir, clip_id, *o.out, seed, timestep, std::cout);
    } else if (validate->parsed()) {
      std::vector<std::filesystem::path> paths(files.begin(), files.end());
      const auto n = wisa::cli::cmd_validate(paths, !lenient, std::cout);
      return n == 0 ? 0 : 1;
    } else if (stats->parsed()) {
      std::cout << wisa::cli::cmd_stats(data_dir, std::cerr).dump(2) << '\n';
    }
  } catch (const wisa::ParseError& e) {
    std::cerr << "error: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const wisa::IoError& e) {
    std::cerr << "error: i/o: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
