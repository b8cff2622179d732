#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recipeflow/core.hpp"
#include "recipeflow/graphkit.hpp"
#include "recipeflow/metrics.hpp"
#include "recipeflow/model.hpp"
#include "recipeflow/synthgen.hpp"

namespace recipeflow::cli {

struct SplitIndices {
  std::vector<int> train, val, test;
};

// Pure function of (n, seed, fractions): a seeded shuffle partitioned into
// train/val/test blocks.
SplitIndices split_dataset(int n, uint64_t seed, double f_train = 0.8, double f_val = 0.1);

struct RunConfig {
  uint64_t seed = 42;
  bool seed_set = false;
  std::string mode = "joint_transformer";
  double theta = 0.5;
  bool theta_set = false;
  int epochs = 30;
  double lr = 1e-3;
  int batch_recipes = 16;
  int patience = 5;
  int min_count = 1;
  double split_train = 0.8;
  double split_val = 0.1;
  model::ModelConfig model;
  synthgen::GenConfig gen;
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string log_path;
  std::string vis_path;
  bool force = false;
  bool reduce_gold = false;
  bool emit_dot = false;
  bool verbose = false;

  void validate() const;
};

bool is_model_mode(const std::string& mode);
bool is_baseline_mode(const std::string& mode);
void check_mode(const std::string& mode);

// Loads a JSON config file over the defaults; command-line flags are applied
// afterwards by the binary and win.
RunConfig config_from_json_file(const std::string& path);

// Writes dataset JSONL, a "<out>.vis.json" visibility sidecar, and a
// "<out>.stats.json" summary. Refuses to overwrite without force.
int cmd_generate(const RunConfig& cfg);

// Trains the selected system on the train split with early stopping on
// validation average F1, then saves the best checkpoint and a CSV log
// (epoch,mean_loss,val_edge_f1).
int cmd_train(const RunConfig& cfg);

// Evaluates the checkpoint on the test split; prints a table row plus an
// optional per-visibility-class breakdown and writes metrics JSON to `out`.
int cmd_eval(const RunConfig& cfg);
metrics::MetricsReport eval_report(const RunConfig& cfg);

// Predicts workflows for the recipes in `dataset`, writing one JSON object
// per line; with emit_dot also writes "<out>.<id>.dot" files.
int cmd_predict(const RunConfig& cfg);

}  // namespace recipeflow::cli
