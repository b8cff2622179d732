#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "recipeflow/cli.hpp"

namespace rf = recipeflow;

namespace {

struct Flags {
  std::string config, dataset, checkpoint, out, log, vis;
  std::string mode;
  uint64_t seed = 0;
  double theta = 0.5;
  int epochs = 0;
  double lr = 0.0;
  int patience = -1;
  bool force = false, dot = false, reduce_gold = false, verbose = false;
  // generator overrides
  int n_recipes = -1, steps_min = -1, steps_max = -1, d_img = -1;
  double noise_sigma = -1.0;
  std::vector<double> visibility;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--theta", f.theta, "decision threshold for edge probabilities");
}

rf::cli::RunConfig merge(const Flags& f, const CLI::App* cmd) {
  rf::cli::RunConfig cfg;
  if (!f.config.empty()) cfg = rf::cli::config_from_json_file(f.config);
  if (cmd->count("--seed")) {
    cfg.seed = f.seed;
    cfg.seed_set = true;
  }
  if (cmd->count("--theta")) {
    cfg.theta = f.theta;
    cfg.theta_set = true;
  }
  if (cmd->count("--mode")) cfg.mode = f.mode;
  if (cmd->count("--epochs")) cfg.epochs = f.epochs;
  if (cmd->count("--lr")) cfg.lr = f.lr;
  if (cmd->count("--patience")) cfg.patience = f.patience;
  if (cmd->count("--dataset")) cfg.dataset = f.dataset;
  if (cmd->count("--checkpoint")) cfg.checkpoint = f.checkpoint;
  if (cmd->count("--out")) cfg.out = f.out;
  if (cmd->count("--log")) cfg.log_path = f.log;
  if (cmd->count("--vis")) cfg.vis_path = f.vis;
  if (f.force) cfg.force = true;
  if (f.dot) cfg.emit_dot = true;
  if (f.reduce_gold) cfg.reduce_gold = true;
  if (f.verbose) cfg.verbose = true;
  if (cmd->count("--n-recipes")) cfg.gen.n_recipes = f.n_recipes;
  if (cmd->count("--steps-min")) cfg.gen.steps_min = f.steps_min;
  if (cmd->count("--steps-max")) cfg.gen.steps_max = f.steps_max;
  if (cmd->count("--d-img")) cfg.gen.d_img = f.d_img;
  if (cmd->count("--noise-sigma")) cfg.gen.noise_sigma = f.noise_sigma;
  if (cmd->count("--visibility")) {
    if (f.visibility.size() != 3) {
      throw rf::ConfigError("--visibility needs 3 probabilities summing to 1");
    }
    cfg.gen.p_text_only = f.visibility[0];
    cfg.gen.p_image_only = f.visibility[1];
    cfg.gen.p_both = f.visibility[2];
  }
  if (cmd->count("--seed")) cfg.gen.seed = f.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recipeflow: workflow graph construction for multi-modal recipes"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic labeled dataset");
  add_common(gen, f);
  gen->add_option("--out", f.out, "output dataset path (JSON Lines)")->required();
  gen->add_option("--n-recipes", f.n_recipes, "number of recipes");
  gen->add_option("--steps-min", f.steps_min, "minimum steps per recipe");
  gen->add_option("--steps-max", f.steps_max, "maximum steps per recipe");
  gen->add_option("--d-img", f.d_img, "image feature dimension");
  gen->add_option("--noise-sigma", f.noise_sigma, "image feature noise std");
  gen->add_option("--visibility", f.visibility, "edge visibility mix: text image both")
      ->expected(3);
  gen->add_flag("--force", f.force, "overwrite existing outputs");

  CLI::App* train = app.add_subcommand("train", "train a model or baseline");
  add_common(train, f);
  train->add_option("--dataset", f.dataset, "labeled dataset path")->required();
  train->add_option("--checkpoint", f.checkpoint, "output checkpoint path")->required();
  train->add_option("--mode", f.mode,
                    "text_only|image_only|concat|joint_transformer|handcrafted|"
                    "handcrafted_mm|imgsim|ffpair");
  train->add_option("--epochs", f.epochs, "maximum training epochs");
  train->add_option("--lr", f.lr, "learning rate");
  train->add_option("--patience", f.patience, "early-stopping patience (epochs)");
  train->add_option("--log", f.log, "CSV training log path");
  train->add_flag("--verbose", f.verbose, "log per-epoch progress to stderr");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, f);
  eval->add_option("--dataset", f.dataset, "labeled dataset path")->required();
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
  eval->add_option("--out", f.out, "metrics JSON output path");
  eval->add_option("--vis", f.vis, "visibility sidecar path (default <dataset>.vis.json)");
  eval->add_flag("--reduce-gold", f.reduce_gold,
                 "transitively reduce gold graphs before scoring");

  CLI::App* predict = app.add_subcommand("predict", "predict workflows for recipes");
  add_common(predict, f);
  predict->add_option("--dataset", f.dataset, "recipes to predict (JSON Lines)")->required();
  predict->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
  predict->add_option("--out", f.out, "output JSON Lines path")->required();
  predict->add_flag("--dot", f.dot, "also write <out>.<id>.dot files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return rf::cli::cmd_generate(merge(f, gen));
    if (train->parsed()) return rf::cli::cmd_train(merge(f, train));
    if (eval->parsed()) return rf::cli::cmd_eval(merge(f, eval));
    if (predict->parsed()) return rf::cli::cmd_predict(merge(f, predict));
  } catch (const rf::Error& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
