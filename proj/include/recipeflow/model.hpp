#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recipeflow/core.hpp"
#include "recipeflow/graphkit.hpp"
#include "recipeflow/nn.hpp"
#include "recipeflow/tensor.hpp"

namespace recipeflow::model {

enum class FusionMode { text_only, image_only, concat, joint_transformer };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct ModelConfig {
  int d_img = 16;
  int d_model = 64;
  int lstm_hidden = 32;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  FusionMode fusion_mode = FusionMode::joint_transformer;
  int vocab_size = 2;
  double dropout = 0.1;
  double theta = 0.5;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Per-call forward options; train enables dropout fed by rng.
struct ForwardCtx {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

struct GatedLayerParams {
  tensor::AttentionParams attn;
  tensor::Tensor gate_w, gate_b;
  tensor::Tensor ln_gain, ln_bias;
};

// Encoder-decoder over a recipe's steps: a per-step multi-modal encoder, a
// transformer recipe encoder with fusion gates, a cross-attention decoder,
// and a sigmoid pointer layer scoring each step against earlier steps.
class WorkflowModel {
 public:
  WorkflowModel(ModelConfig cfg, core::Vocab vocab, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const core::Vocab& vocab() const { return vocab_; }
  tensor::ParameterStore& params() { return store_; }
  const tensor::ParameterStore& params() const { return store_; }

  // Mean of the step's image feature vectors (zero vector when the step has
  // none) projected to d_model.
  tensor::Tensor encode_images(const core::CookingStep& step, const ForwardCtx& ctx = {}) const;
  // Word embeddings -> BiLSTM -> attention pooling -> d_model.
  tensor::Tensor encode_instruction(const core::CookingStep& step,
                                    const ForwardCtx& ctx = {}) const;
  // Combines visual and textual embeddings according to fusion_mode; the
  // joint_transformer mode reads the raw step instead of F/C.
  tensor::Tensor fuse(const tensor::Tensor& f_img, const tensor::Tensor& c_txt,
                      const core::CookingStep& step, const ForwardCtx& ctx = {}) const;

  tensor::Tensor step_embeddings(const core::Recipe& r, const ForwardCtx& ctx = {}) const;
  tensor::Tensor encode_recipe(const tensor::Tensor& t, const ForwardCtx& ctx = {}) const;
  tensor::Tensor decode_outputs(const tensor::Tensor& t, const tensor::Tensor& e,
                                const ForwardCtx& ctx = {}) const;
  // n x n matrix of sigmoid pointer probabilities; only j < i entries are
  // meaningful downstream.
  tensor::Tensor pointer_probs(const tensor::Tensor& o, const tensor::Tensor& e) const;

  tensor::Tensor forward_probs(const core::Recipe& r, const ForwardCtx& ctx = {}) const;
  graphkit::EdgeProbMatrix decode_relations(const core::Recipe& r) const;
  graphkit::WorkflowGraph predict(const core::Recipe& r) const;

 private:
  tensor::Tensor fuse_joint(const core::CookingStep& step, const ForwardCtx& ctx) const;
  tensor::Tensor gated_layer(const tensor::Tensor& x, const tensor::Tensor& kv,
                             const GatedLayerParams& p, const ForwardCtx& ctx) const;
  GatedLayerParams layer_params(const std::string& prefix) const;

  ModelConfig cfg_;
  core::Vocab vocab_;
  tensor::ParameterStore store_;
};

// Mean binary cross-entropy over all j < i pairs, probabilities clamped to
// [1e-7, 1 - 1e-7]. The tensor form must match the plain-double reference.
double loss_value(const graphkit::EdgeProbMatrix& p, const core::WorkflowGraph& gold);
tensor::Tensor loss_from_probs(const tensor::Tensor& probs, const core::WorkflowGraph& gold);

struct TrainOptions {
  int epochs = 30;
  double lr = 1e-3;
  int batch_recipes = 16;  // gradient accumulation window
  uint64_t seed = 42;
  int patience = 0;  // early stop on validation average F1; 0 disables
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double val_edge_f1 = 0;
  double val_avg_f1 = 0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_avg_f1 = -1.0;
};

// Adam on the mean per-recipe loss with seeded shuffling each epoch.
// Restores the best-validation parameters when patience is enabled.
TrainLog train(WorkflowModel& m, const std::vector<const core::Recipe*>& train_set,
               const std::vector<const core::Recipe*>& val_set, const TrainOptions& opt);

void save_checkpoint(const WorkflowModel& m, const std::string& path, uint64_t seed);

struct LoadedModel {
  WorkflowModel model;
  uint64_t seed = 0;
};
LoadedModel load_checkpoint(const std::string& path);

}  // namespace recipeflow::model
