#include "recipeflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "recipeflow/metrics.hpp"

namespace recipeflow::model {

using tensor::Tensor;

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "text_only") return FusionMode::text_only;
  if (s == "image_only") return FusionMode::image_only;
  if (s == "concat") return FusionMode::concat;
  if (s == "joint_transformer") return FusionMode::joint_transformer;
  throw ConfigError("unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::text_only: return "text_only";
    case FusionMode::image_only: return "image_only";
    case FusionMode::concat: return "concat";
    case FusionMode::joint_transformer: return "joint_transformer";
  }
  throw ConfigError("invalid fusion mode value");
}

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be positive and divisible by n_heads");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must be in [0,1]");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (d_img <= 0 || lstm_hidden <= 0 || n_enc_layers < 1 || n_dec_layers < 1 || vocab_size < 2) {
    throw ConfigError("model dimensions must be positive (vocab_size >= 2)");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_img"] = d_img;
  j["d_model"] = d_model;
  j["lstm_hidden"] = lstm_hidden;
  j["n_heads"] = n_heads;
  j["n_enc_layers"] = n_enc_layers;
  j["n_dec_layers"] = n_dec_layers;
  j["fusion_mode"] = to_string(fusion_mode);
  j["vocab_size"] = vocab_size;
  j["dropout"] = dropout;
  j["theta"] = theta;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "d_img") c.d_img = val.get<int>();
    else if (key == "d_model") c.d_model = val.get<int>();
    else if (key == "lstm_hidden") c.lstm_hidden = val.get<int>();
    else if (key == "n_heads") c.n_heads = val.get<int>();
    else if (key == "n_enc_layers") c.n_enc_layers = val.get<int>();
    else if (key == "n_dec_layers") c.n_dec_layers = val.get<int>();
    else if (key == "fusion_mode") c.fusion_mode = fusion_mode_from_string(val.get<std::string>());
    else if (key == "vocab_size") c.vocab_size = val.get<int>();
    else if (key == "dropout") c.dropout = val.get<double>();
    else if (key == "theta") c.theta = val.get<double>();
    else throw ConfigError("model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

bool uses_text_encoder(FusionMode m) {
  return m == FusionMode::text_only || m == FusionMode::concat;
}
bool uses_image_encoder(FusionMode m) {
  return m == FusionMode::image_only || m == FusionMode::concat;
}

Tensor const_row(const std::vector<double>& v) {
  return Tensor::row(v);
}

}  // namespace

WorkflowModel::WorkflowModel(ModelConfig cfg, core::Vocab vocab, uint64_t init_seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  if (!vocab_.empty()) cfg_.vocab_size = core::vocab_size(vocab_);
  cfg_.validate();
  std::mt19937_64 rng(init_seed);
  const int d = cfg_.d_model;
  const int h = cfg_.lstm_hidden;
  const bool needs_wordemb =
      uses_text_encoder(cfg_.fusion_mode) || cfg_.fusion_mode == FusionMode::joint_transformer;
  if (needs_wordemb) {
    store_.create("wordemb", {cfg_.vocab_size, d}, rng);
  }
  if (uses_text_encoder(cfg_.fusion_mode)) {
    tensor::make_lstm_params(store_, "lstm.fwd", d, h, rng);
    tensor::make_lstm_params(store_, "lstm.bwd", d, h, rng);
    store_.create("pool.q", {1, 2 * h}, rng);
    store_.create("pool.w", {2 * h, d}, rng);
    store_.create_zeros("pool.b", {1, d});
  }
  if (uses_image_encoder(cfg_.fusion_mode)) {
    store_.create("img.w", {cfg_.d_img, d}, rng);
    store_.create_zeros("img.b", {1, d});
  }
  if (cfg_.fusion_mode == FusionMode::concat) {
    store_.create("fuse.wt", {d, d}, rng);
    store_.create_zeros("fuse.bt", {1, d});
    store_.create("fuse.wi", {d, d}, rng);
    store_.create_zeros("fuse.bi", {1, d});
    store_.create("fuse.ff1.w", {2 * d, d}, rng);
    store_.create_zeros("fuse.ff1.b", {1, d});
    store_.create("fuse.ff2.w", {d, d}, rng);
    store_.create_zeros("fuse.ff2.b", {1, d});
  }
  if (cfg_.fusion_mode == FusionMode::joint_transformer) {
    store_.create("imgtok.w", {cfg_.d_img, d}, rng);
    store_.create_zeros("imgtok.b", {1, d});
    store_.create("joint.cls", {1, d}, rng);
    store_.create("joint.seg_cls", {1, d}, rng);
    store_.create("joint.seg_img", {1, d}, rng);
    store_.create("joint.seg_txt", {1, d}, rng);
    for (int l = 0; l < 2; ++l) {
      const std::string p = "joint.layer" + std::to_string(l);
      tensor::make_attention_params(store_, p + ".attn", d, rng);
      store_.create(p + ".gate.w", {2 * d, d}, rng);
      store_.create_zeros(p + ".gate.b", {1, d});
      Tensor gain = store_.create_zeros(p + ".ln.gain", {1, d});
      std::fill(gain.value().begin(), gain.value().end(), 1.0);
      store_.create_zeros(p + ".ln.bias", {1, d});
    }
  }
  auto make_stack = [&](const std::string& stack, int layers) {
    for (int l = 0; l < layers; ++l) {
      const std::string p = stack + ".layer" + std::to_string(l);
      tensor::make_attention_params(store_, p + ".attn", d, rng);
      store_.create(p + ".gate.w", {2 * d, d}, rng);
      store_.create_zeros(p + ".gate.b", {1, d});
      Tensor gain = store_.create_zeros(p + ".ln.gain", {1, d});
      std::fill(gain.value().begin(), gain.value().end(), 1.0);
      store_.create_zeros(p + ".ln.bias", {1, d});
    }
  };
  make_stack("enc", cfg_.n_enc_layers);
  make_stack("dec", cfg_.n_dec_layers);
  store_.create("pointer.w_q", {d, d}, rng);
  store_.create("pointer.w_k", {d, d}, rng);
}

GatedLayerParams WorkflowModel::layer_params(const std::string& prefix) const {
  GatedLayerParams p;
  p.attn.w_q = store_.get(prefix + ".attn.w_q");
  p.attn.w_k = store_.get(prefix + ".attn.w_k");
  p.attn.w_v = store_.get(prefix + ".attn.w_v");
  p.attn.w_o = store_.get(prefix + ".attn.w_o");
  p.gate_w = store_.get(prefix + ".gate.w");
  p.gate_b = store_.get(prefix + ".gate.b");
  p.ln_gain = store_.get(prefix + ".ln.gain");
  p.ln_bias = store_.get(prefix + ".ln.bias");
  return p;
}

Tensor WorkflowModel::gated_layer(const Tensor& x, const Tensor& kv, const GatedLayerParams& p,
                                  const ForwardCtx& ctx) const {
  Tensor a = tensor::multi_head_attention(x, kv, kv, cfg_.n_heads, p.attn, nullptr, cfg_.dropout,
                                          ctx.train, ctx.rng);
  Tensor g = tensor::sigmoid(tensor::add(tensor::matmul(tensor::concat_cols({x, a}), p.gate_w),
                                         p.gate_b));
  Tensor ones = Tensor::full(g.shape(), 1.0);
  Tensor mixed = tensor::add(tensor::mul(g, x), tensor::mul(tensor::sub(ones, g), a));
  return tensor::layer_norm(mixed, p.ln_gain, p.ln_bias);
}

Tensor WorkflowModel::encode_images(const core::CookingStep& step, const ForwardCtx&) const {
  std::vector<double> mean(cfg_.d_img, 0.0);
  if (!step.images.empty()) {
    for (const auto& img : step.images) {
      if (static_cast<int>(img.size()) != cfg_.d_img) {
        throw ShapeError("encode_images: feature dim " + std::to_string(img.size()) +
                         " != d_img " + std::to_string(cfg_.d_img));
      }
      for (int k = 0; k < cfg_.d_img; ++k) mean[k] += img[k];
    }
    const double inv = 1.0 / static_cast<double>(step.images.size());
    for (double& v : mean) v *= inv;
  }
  return tensor::linear(const_row(mean), store_.get("img.w"), store_.get("img.b"));
}

Tensor WorkflowModel::encode_instruction(const core::CookingStep& step,
                                         const ForwardCtx&) const {
  if (step.text.empty()) {
    throw ArgumentError("encode_instruction: step text must be non-empty");
  }
  const std::vector<int> ids = core::encode_tokens(vocab_, step.text);
  Tensor emb = tensor::embedding_lookup(store_.get("wordemb"), ids);
  Tensor states = tensor::bilstm(emb, {store_.get("lstm.fwd.w_ih"), store_.get("lstm.fwd.w_hh"),
                                       store_.get("lstm.fwd.b")},
                                 {store_.get("lstm.bwd.w_ih"), store_.get("lstm.bwd.w_hh"),
                                  store_.get("lstm.bwd.b")},
                                 cfg_.lstm_hidden);
  Tensor pooled = tensor::attention_pool(states, store_.get("pool.q"));
  return tensor::linear(pooled, store_.get("pool.w"), store_.get("pool.b"));
}

Tensor WorkflowModel::fuse_joint(const core::CookingStep& step, const ForwardCtx& ctx) const {
  const int d = cfg_.d_model;
  std::vector<Tensor> rows;
  rows.push_back(tensor::add(store_.get("joint.cls"), store_.get("joint.seg_cls")));
  if (!step.images.empty()) {
    std::vector<double> flat;
    flat.reserve(step.images.size() * cfg_.d_img);
    for (const auto& img : step.images) {
      if (static_cast<int>(img.size()) != cfg_.d_img) {
        throw ShapeError("fuse: image feature dim mismatch");
      }
      flat.insert(flat.end(), img.begin(), img.end());
    }
    Tensor imgs = Tensor::from_data({static_cast<int>(step.images.size()), cfg_.d_img},
                                    std::move(flat));
    Tensor tok = tensor::linear(imgs, store_.get("imgtok.w"), store_.get("imgtok.b"));
    rows.push_back(tensor::add(tok, store_.get("joint.seg_img")));
  }
  const std::vector<int> ids = core::encode_tokens(vocab_, step.text);
  Tensor words = tensor::embedding_lookup(store_.get("wordemb"), ids);
  rows.push_back(tensor::add(words, store_.get("joint.seg_txt")));
  Tensor x = tensor::concat_rows(rows);
  for (int l = 0; l < 2; ++l) {
    x = gated_layer(x, x, layer_params("joint.layer" + std::to_string(l)), ctx);
  }
  (void)d;
  return tensor::slice_rows(x, 0, 1);
}

Tensor WorkflowModel::fuse(const Tensor& f_img, const Tensor& c_txt, const core::CookingStep& step,
                           const ForwardCtx& ctx) const {
  switch (cfg_.fusion_mode) {
    case FusionMode::text_only:
      return c_txt;
    case FusionMode::image_only:
      return f_img;
    case FusionMode::concat: {
      Tensor xt = tensor::linear(c_txt, store_.get("fuse.wt"), store_.get("fuse.bt"));
      Tensor xi = tensor::linear(f_img, store_.get("fuse.wi"), store_.get("fuse.bi"));
      Tensor h = tensor::relu(tensor::linear(tensor::concat_cols({xt, xi}),
                                             store_.get("fuse.ff1.w"), store_.get("fuse.ff1.b")));
      Tensor out = tensor::linear(h, store_.get("fuse.ff2.w"), store_.get("fuse.ff2.b"));
      if (ctx.train && ctx.rng && cfg_.dropout > 0.0) {
        out = tensor::dropout(out, cfg_.dropout, true, *ctx.rng);
      }
      return out;
    }
    case FusionMode::joint_transformer:
      return fuse_joint(step, ctx);
  }
  throw ConfigError("fuse: unknown fusion mode");
}

Tensor WorkflowModel::step_embeddings(const core::Recipe& r, const ForwardCtx& ctx) const {
  std::vector<Tensor> rows;
  rows.reserve(r.steps.size());
  for (const core::CookingStep& s : r.steps) {
    Tensor f, c;
    if (uses_image_encoder(cfg_.fusion_mode)) f = encode_images(s, ctx);
    if (uses_text_encoder(cfg_.fusion_mode)) c = encode_instruction(s, ctx);
    rows.push_back(fuse(f, c, s, ctx));
  }
  return tensor::concat_rows(rows);
}

Tensor WorkflowModel::encode_recipe(const Tensor& t, const ForwardCtx& ctx) const {
  Tensor x = tensor::add(t, tensor::positional_encoding(t.rows(), t.cols()));
  for (int l = 0; l < cfg_.n_enc_layers; ++l) {
    x = gated_layer(x, x, layer_params("enc.layer" + std::to_string(l)), ctx);
  }
  return x;
}

Tensor WorkflowModel::decode_outputs(const Tensor& t, const Tensor& e,
                                     const ForwardCtx& ctx) const {
  Tensor x = tensor::add(t, tensor::positional_encoding(t.rows(), t.cols()));
  for (int l = 0; l < cfg_.n_dec_layers; ++l) {
    x = gated_layer(x, e, layer_params("dec.layer" + std::to_string(l)), ctx);
  }
  return x;
}

Tensor WorkflowModel::pointer_probs(const Tensor& o, const Tensor& e) const {
  Tensor q = tensor::relu(tensor::matmul(o, store_.get("pointer.w_q")));
  Tensor k = tensor::relu(tensor::matmul(e, store_.get("pointer.w_k")));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  return tensor::sigmoid(tensor::scale(tensor::matmul(q, tensor::transpose(k)), inv_sqrt));
}

Tensor WorkflowModel::forward_probs(const core::Recipe& r, const ForwardCtx& ctx) const {
  Tensor t = step_embeddings(r, ctx);
  Tensor e = encode_recipe(t, ctx);
  Tensor o = decode_outputs(t, e, ctx);
  return pointer_probs(o, e);
}

graphkit::EdgeProbMatrix WorkflowModel::decode_relations(const core::Recipe& r) const {
  Tensor p = forward_probs(r);
  graphkit::EdgeProbMatrix m(r.n());
  for (int i = 1; i < r.n(); ++i) {
    for (int j = 0; j < i; ++j) m.set(i, j, p(i, j));
  }
  return m;
}

graphkit::WorkflowGraph WorkflowModel::predict(const core::Recipe& r) const {
  return graphkit::build_workflow(decode_relations(r), cfg_.theta);
}

// ---- loss ----

namespace {
constexpr double kProbClamp = 1e-7;
}

double loss_value(const graphkit::EdgeProbMatrix& p, const core::WorkflowGraph& gold) {
  if (p.n() != gold.n) {
    throw ArgumentError("loss: matrix n " + std::to_string(p.n()) + " != gold n " +
                        std::to_string(gold.n));
  }
  const int n = p.n();
  const long long pairs = static_cast<long long>(n) * (n - 1) / 2;
  if (pairs == 0) return 0.0;
  double total = 0.0;
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double prob = std::min(1.0 - kProbClamp, std::max(kProbClamp, p.at(i, j)));
      total += gold.has_edge(j, i) ? std::log(prob) : std::log(1.0 - prob);
    }
  }
  return -total / static_cast<double>(pairs);
}

Tensor loss_from_probs(const Tensor& probs, const core::WorkflowGraph& gold) {
  const int n = gold.n;
  if (probs.rows() != n || probs.cols() != n) {
    throw ArgumentError("loss: probability matrix must be n x n with n = gold node count");
  }
  const long long pairs = static_cast<long long>(n) * (n - 1) / 2;
  Tensor y_pos = Tensor::zeros({n, n});
  Tensor y_neg = Tensor::zeros({n, n});
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      if (gold.has_edge(j, i)) {
        y_pos.at(i, j) = 1.0;
      } else {
        y_neg.at(i, j) = 1.0;
      }
    }
  }
  Tensor pc = tensor::clamp(probs, kProbClamp, 1.0 - kProbClamp);
  Tensor ones = Tensor::full({n, n}, 1.0);
  Tensor term = tensor::add(tensor::mul(y_pos, tensor::log_t(pc)),
                            tensor::mul(y_neg, tensor::log_t(tensor::sub(ones, pc))));
  return tensor::scale(tensor::sum(term), -1.0 / static_cast<double>(pairs));
}

// ---- training ----

namespace {

std::vector<std::vector<double>> snapshot_values(const tensor::ParameterStore& store) {
  std::vector<std::vector<double>> snap;
  snap.reserve(store.all().size());
  for (const auto& p : store.all()) snap.push_back(p.tensor.value());
  return snap;
}

void restore_values(tensor::ParameterStore& store, const std::vector<std::vector<double>>& snap) {
  for (size_t i = 0; i < snap.size(); ++i) store.all()[i].tensor.value() = snap[i];
}

}  // namespace

TrainLog train(WorkflowModel& m, const std::vector<const core::Recipe*>& train_set,
               const std::vector<const core::Recipe*>& val_set, const TrainOptions& opt) {
  if (train_set.empty()) throw DataError("train: empty training set");
  for (const core::Recipe* r : train_set) {
    if (!r->gold_workflow) {
      throw DataError("train: recipe '" + r->id + "' has no gold workflow");
    }
  }
  std::mt19937_64 rng(opt.seed);
  tensor::Adam adam(opt.lr);
  TrainLog log;
  std::vector<std::vector<double>> best_snapshot;
  int since_best = 0;
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // Fisher-Yates with the run RNG keeps epochs reproducible.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[tensor::uniform_int(rng, 0, i)]);
    }
    double loss_sum = 0.0;
    int pending = 0;
    auto flush = [&] {
      if (pending == 0) return;
      const double inv = 1.0 / static_cast<double>(pending);
      for (auto& p : m.params().all()) {
        if (!p.tensor.has_grad()) continue;
        for (double& g : p.tensor.grad()) g *= inv;
      }
      adam.step(m.params());
      m.params().zero_grad();
      pending = 0;
    };
    for (size_t idx = 0; idx < order.size(); ++idx) {
      const core::Recipe& r = *train_set[order[idx]];
      tensor::Tape tape;
      {
        tensor::Tape::Scope scope(tape);
        ForwardCtx ctx{true, &rng};
        Tensor probs = m.forward_probs(r, ctx);
        Tensor l = loss_from_probs(probs, *r.gold_workflow);
        tape.backward(l);
        loss_sum += l.item();
      }
      if (++pending >= opt.batch_recipes) flush();
    }
    flush();

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      std::vector<core::WorkflowGraph> gold, pred;
      gold.reserve(val_set.size());
      for (const core::Recipe* r : val_set) {
        gold.push_back(*r->gold_workflow);
        pred.push_back(m.predict(*r));
      }
      const auto rep = metrics::evaluate(gold, pred);
      stats.val_edge_f1 = rep.edge_f1;
      stats.val_avg_f1 = rep.avg_f1;
      if (rep.avg_f1 > log.best_val_avg_f1) {
        log.best_val_avg_f1 = rep.avg_f1;
        log.best_epoch = stats.epoch;
        since_best = 0;
        if (opt.patience > 0) best_snapshot = snapshot_values(m.params());
      } else {
        ++since_best;
      }
    }
    log.epochs.push_back(stats);
    if (opt.verbose) {
      std::fprintf(stderr, "epoch %d  loss %.6f  val_avg_f1 %.4f\n", stats.epoch,
                   stats.mean_loss, stats.val_avg_f1);
    }
    if (opt.patience > 0 && !val_set.empty() && since_best >= opt.patience) break;
  }
  if (!best_snapshot.empty()) restore_values(m.params(), best_snapshot);
  return log;
}

// ---- checkpointing ----

void save_checkpoint(const WorkflowModel& m, const std::string& path, uint64_t seed) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["mode"] = to_string(m.config().fusion_mode);
  j["seed"] = seed;
  j["config"] = nlohmann::ordered_json::parse(m.config().to_json());
  j["vocab"] = m.vocab();
  j["tensors"] = nlohmann::ordered_json::parse(tensor::params_to_json(m.params()));
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump();
  if (!out) throw IoError("checkpoint write failed: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format_version", 0) != 1) {
    throw ConfigError("checkpoint: unsupported format_version");
  }
  ModelConfig cfg = ModelConfig::from_json(j.at("config").dump());
  core::Vocab vocab = j.at("vocab").get<core::Vocab>();
  LoadedModel out{WorkflowModel(cfg, std::move(vocab), 0), j.value("seed", uint64_t{0})};
  tensor::params_from_json(out.model.params(), j.at("tensors").dump());
  return out;
}

}  // namespace recipeflow::model
