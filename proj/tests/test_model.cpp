#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "recipeflow/model.hpp"
#include "testutil.hpp"

using namespace recipeflow;
using namespace recipeflow::model;
using recipeflow::tensor::Tensor;

namespace {

ModelConfig tiny_config(FusionMode mode) {
  ModelConfig c;
  c.d_img = 3;
  c.d_model = 8;
  c.lstm_hidden = 4;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.fusion_mode = mode;
  c.dropout = 0.0;
  return c;
}

core::Recipe four_step_recipe() {
  std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3}};
  return testutil::make_recipe(
      "r4", {"mix the flour", "add eggs slowly", "whisk sugar", "bake the batter"},
      {{{1, 0, 0}}, {{0, 1, 0}, {0, 0, 1}}, {}, {{0.5, 0.5, 0}}}, &edges);
}

core::Vocab vocab_for(const core::Recipe& r) { return core::build_vocab({r}, 1); }

graphkit::EdgeProbMatrix matrix3(double p10, double p20, double p21) {
  graphkit::EdgeProbMatrix m(3);
  m.set(1, 0, p10);
  m.set(2, 0, p20);
  m.set(2, 1, p21);
  return m;
}

}  // namespace

TEST_CASE("encode_images averages feature vectors before projecting") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::image_only), {}, 7);
  const Tensor w = m.params().get("img.w");
  const Tensor b = m.params().get("img.b");

  // two images [1,0,0] and [0,1,0]: the pre-projection mean is [.5,.5,0]
  core::CookingStep s = r.steps[1];
  s.images = {{1, 0, 0}, {0, 1, 0}};
  Tensor f = m.encode_images(s);
  for (int c = 0; c < 8; ++c) {
    const double expect = 0.5 * w(0, c) + 0.5 * w(1, c) + b(0, c);
    CHECK(f(0, c) == doctest::Approx(expect).epsilon(1e-12));
  }

  // a single image is its own mean
  s.images = {{0.2, -0.4, 1.0}};
  Tensor f1 = m.encode_images(s);
  for (int c = 0; c < 8; ++c) {
    const double expect = 0.2 * w(0, c) - 0.4 * w(1, c) + 1.0 * w(2, c) + b(0, c);
    CHECK(f1(0, c) == doctest::Approx(expect).epsilon(1e-12));
  }

  // no images: zero vector pre-projection, so only the bias remains
  s.images = {};
  Tensor f0 = m.encode_images(s);
  for (int c = 0; c < 8; ++c) CHECK(f0(0, c) == b(0, c));
}

TEST_CASE("encode_images is invariant to image order") {
  std::mt19937_64 rng(3);
  WorkflowModel m(tiny_config(FusionMode::image_only), {}, 8);
  for (int it = 0; it < 20; ++it) {
    core::CookingStep s;
    s.text = {"x"};
    const int k = 2 + static_cast<int>(rng() % 4);
    for (int t = 0; t < k; ++t) {
      s.images.push_back({tensor::normal_real(rng), tensor::normal_real(rng),
                          tensor::normal_real(rng)});
    }
    Tensor a = m.encode_images(s);
    core::CookingStep perm = s;
    for (int t = static_cast<int>(perm.images.size()) - 1; t > 0; --t) {
      std::swap(perm.images[t], perm.images[tensor::uniform_int(rng, 0, t)]);
    }
    Tensor b = m.encode_images(perm);
    for (int c = 0; c < 8; ++c) CHECK(a(0, c) == doctest::Approx(b(0, c)).epsilon(1e-9));
  }
}

TEST_CASE("encode_instruction on a single token pools that state with weight 1") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::text_only), vocab_for(r), 9);
  core::CookingStep s;
  s.index = 0;
  s.text = {"flour"};
  Tensor c = m.encode_instruction(s);

  const auto ids = core::encode_tokens(m.vocab(), s.text);
  Tensor emb = tensor::embedding_lookup(m.params().get("wordemb"), ids);
  Tensor states = tensor::bilstm(
      emb,
      {m.params().get("lstm.fwd.w_ih"), m.params().get("lstm.fwd.w_hh"),
       m.params().get("lstm.fwd.b")},
      {m.params().get("lstm.bwd.w_ih"), m.params().get("lstm.bwd.w_hh"),
       m.params().get("lstm.bwd.b")},
      4);
  Tensor expect =
      tensor::linear(states, m.params().get("pool.w"), m.params().get("pool.b"));
  for (int k = 0; k < 8; ++k) CHECK(c(0, k) == doctest::Approx(expect(0, k)).epsilon(1e-12));

  core::CookingStep empty;
  empty.text = {};
  CHECK_THROWS_AS(m.encode_instruction(empty), ArgumentError);
}

TEST_CASE("text_only predictions ignore image features entirely") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::text_only), vocab_for(r), 10);
  auto before = m.decode_relations(r);
  core::Recipe noisy = r;
  std::mt19937_64 rng(77);
  for (auto& s : noisy.steps) {
    for (auto& img : s.images) {
      for (double& v : img) v = 100.0 * tensor::normal_real(rng);
    }
  }
  auto after = m.decode_relations(noisy);
  for (int i = 1; i < r.n(); ++i) {
    for (int j = 0; j < i; ++j) CHECK(before.at(i, j) == after.at(i, j));
  }
}

TEST_CASE("image_only predictions ignore text entirely") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::image_only), {}, 11);
  auto before = m.decode_relations(r);
  core::Recipe renamed = r;
  for (auto& s : renamed.steps) s.text = {"zzz", "qqq"};
  auto after = m.decode_relations(renamed);
  for (int i = 1; i < r.n(); ++i) {
    for (int j = 0; j < i; ++j) CHECK(before.at(i, j) == after.at(i, j));
  }
}

TEST_CASE("concat fusion on a zero-image step is a pure function of the text embedding") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::concat), vocab_for(r), 12);
  core::CookingStep s = r.steps[2];  // no images
  Tensor f = m.encode_images(s);
  Tensor c = m.encode_instruction(s);
  Tensor t1 = m.fuse(f, c, s);
  Tensor t2 = m.fuse(m.encode_images(s), m.encode_instruction(s), s);
  CHECK(t1.value() == t2.value());
}

TEST_CASE("joint fusion CLS output reacts to image perturbations") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::joint_transformer), vocab_for(r), 13);
  core::CookingStep s = r.steps[0];
  Tensor base = m.fuse({}, {}, s);
  core::CookingStep bumped = s;
  bumped.images[0][1] += 0.5;
  Tensor moved = m.fuse({}, {}, bumped);
  double diff = 0;
  for (int k = 0; k < 8; ++k) diff += std::abs(base(0, k) - moved(0, k));
  CHECK(diff > 1e-6);
}

TEST_CASE("encode_recipe handles a single step and is position sensitive") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::text_only), vocab_for(r), 14);
  Tensor one = m.encode_recipe(Tensor::full({1, 8}, 0.3));
  CHECK(one.rows() == 1);

  Tensor t = m.step_embeddings(r);
  Tensor e = m.encode_recipe(t);
  // swap two step embeddings: positions stay, content moves
  std::vector<Tensor> rows;
  for (int k = 0; k < 4; ++k) rows.push_back(tensor::slice_rows(t, k, k + 1));
  std::swap(rows[0], rows[3]);
  Tensor e_swapped = m.encode_recipe(tensor::concat_rows(rows));
  double diff = 0;
  for (long long k = 0; k < e.size(); ++k) diff += std::abs(e.value()[k] - e_swapped.value()[k]);
  CHECK(diff > 1e-6);
}

TEST_CASE("a saturated gate bypasses attention: layer output becomes layer_norm(input)") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::text_only), vocab_for(r), 15);
  Tensor gate_b = m.params().get("enc.layer0.gate.b");
  for (double& v : gate_b.value()) v = 50.0;  // sigmoid saturates at 1
  Tensor t = m.step_embeddings(r);
  Tensor x = tensor::add(t, tensor::positional_encoding(4, 8));
  Tensor expect = tensor::layer_norm(x, m.params().get("enc.layer0.ln.gain"),
                                     m.params().get("enc.layer0.ln.bias"));
  Tensor e = m.encode_recipe(t);
  for (long long k = 0; k < e.size(); ++k) {
    CHECK(e.value()[k] == doctest::Approx(expect.value()[k]).epsilon(1e-9));
  }
}

TEST_CASE("zero pointer weights give probability 0.5 everywhere") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::text_only), vocab_for(r), 16);
  for (double& v : m.params().get("pointer.w_q").value()) v = 0.0;
  for (double& v : m.params().get("pointer.w_k").value()) v = 0.0;
  auto p = m.decode_relations(r);
  for (int i = 1; i < 4; ++i) {
    for (int j = 0; j < i; ++j) CHECK(p.at(i, j) == doctest::Approx(0.5));
  }
}

TEST_CASE("pointer layer scalar case matches the hand-computed value") {
  // d = 1: O = 1, W_Q = 1, E = 2, W_K = 1 -> logit 2 -> sigmoid(2)
  Tensor o = Tensor::row({1.0});
  Tensor e = Tensor::row({2.0});
  Tensor q = tensor::relu(tensor::matmul(o, Tensor::row({1.0})));
  Tensor k = tensor::relu(tensor::matmul(e, Tensor::row({1.0})));
  Tensor p = tensor::sigmoid(tensor::scale(tensor::matmul(q, tensor::transpose(k)), 1.0));
  CHECK(p.item() == doctest::Approx(0.8807970779778823));
}

TEST_CASE("pointer probabilities stay strictly inside (0,1)") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::joint_transformer), vocab_for(r), 17);
  auto p = m.decode_relations(r);
  for (int i = 1; i < 4; ++i) {
    for (int j = 0; j < i; ++j) {
      CHECK(p.at(i, j) > 0.0);
      CHECK(p.at(i, j) < 1.0);
    }
  }
}

TEST_CASE("loss hand-worked cases") {
  core::WorkflowGraph gold(3);
  gold.add_edge(0, 1);
  // perfect prediction: clamped log stays within 1e-6 of zero
  auto perfect = matrix3(1.0, 0.0, 0.0);
  CHECK(loss_value(perfect, gold) == doctest::Approx(0.0).epsilon(1e-6));

  // single pair, gold edge, probability one half
  core::WorkflowGraph pair_gold(2);
  pair_gold.add_edge(0, 1);
  graphkit::EdgeProbMatrix half(2);
  half.set(1, 0, 0.5);
  CHECK(loss_value(half, pair_gold) == doctest::Approx(std::log(2.0)));

  // uniform 0.5 gives ln 2 regardless of the gold edges
  auto uniform = matrix3(0.5, 0.5, 0.5);
  core::WorkflowGraph g1(3), g2(3);
  g2.add_edge(0, 2);
  g2.add_edge(1, 2);
  CHECK(loss_value(uniform, g1) == doctest::Approx(std::log(2.0)));
  CHECK(loss_value(uniform, g2) == doctest::Approx(std::log(2.0)));

  core::WorkflowGraph wrong_n(5);
  CHECK_THROWS_AS(loss_value(uniform, wrong_n), ArgumentError);
}

TEST_CASE("tape loss agrees with the plain-double reference") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::concat), vocab_for(r), 18);
  Tensor probs = m.forward_probs(r);
  Tensor l = loss_from_probs(probs, *r.gold_workflow);
  CHECK(l.item() == doctest::Approx(loss_value(m.decode_relations(r), *r.gold_workflow))
                        .epsilon(1e-12));
}

TEST_CASE("full-model gradients pass finite differences in every fusion mode") {
  auto r = four_step_recipe();
  for (FusionMode mode : {FusionMode::text_only, FusionMode::image_only, FusionMode::concat,
                          FusionMode::joint_transformer}) {
    CAPTURE(to_string(mode));
    WorkflowModel m(tiny_config(mode), vocab_for(r), 19);
    auto build_loss = [&] { return loss_from_probs(m.forward_probs(r), *r.gold_workflow); };
    auto res = testutil::finite_difference_check(
        m.params(), [&] { return build_loss().item(); },
        [&] {
          tensor::Tape tape;
          tensor::Tape::Scope scope(tape);
          tape.backward(build_loss());
        });
    CHECK(res.checked > 100);
    CHECK(res.max_rel_err < 1e-3);
  }
}

TEST_CASE("training for zero epochs leaves parameters at initialization") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::concat), vocab_for(r), 20);
  std::vector<std::vector<double>> before;
  for (auto& p : m.params().all()) before.push_back(p.tensor.value());
  TrainOptions opt;
  opt.epochs = 0;
  model::train(m, {&r}, {}, opt);
  size_t k = 0;
  for (auto& p : m.params().all()) CHECK(p.tensor.value() == before[k++]);
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  std::vector<core::Recipe> data;
  std::mt19937_64 rng(31);
  for (int k = 0; k < 6; ++k) {
    auto g = testutil::random_dag(rng, 4, 0.4);
    std::vector<std::pair<int, int>> edges(g.edges.begin(), g.edges.end());
    data.push_back(testutil::make_recipe(
        "r" + std::to_string(k), {"mix the flour", "add eggs", "whisk sugar", "bake it"},
        {{{1, 0, 0}}, {{0, 1, 0}}, {{0, 0, 1}}, {{1, 1, 0}}}, &edges));
  }
  std::vector<const core::Recipe*> ptrs;
  for (auto& d : data) ptrs.push_back(&d);
  auto run = [&] {
    ModelConfig cfg = tiny_config(FusionMode::concat);
    cfg.dropout = 0.1;  // exercises the dropout RNG path too
    WorkflowModel m(cfg, core::build_vocab(data, 1), 55);
    TrainOptions opt;
    opt.epochs = 2;
    opt.seed = 55;
    opt.batch_recipes = 2;
    return model::train(m, ptrs, {}, opt);
  };
  auto log1 = run();
  auto log2 = run();
  REQUIRE(log1.epochs.size() == log2.epochs.size());
  for (size_t e = 0; e < log1.epochs.size(); ++e) {
    CHECK(log1.epochs[e].mean_loss == log2.epochs[e].mean_loss);
  }
}

TEST_CASE("training rejects recipes without gold workflows") {
  auto r = testutil::make_recipe("nogold", {"a b", "c d"});
  WorkflowModel m(tiny_config(FusionMode::text_only), core::build_vocab({r}, 1), 1);
  TrainOptions opt;
  opt.epochs = 1;
  CHECK_THROWS_AS(model::train(m, {&r}, {}, opt), DataError);
}

TEST_CASE("a tiny model overfits a single recipe") {
  auto r = four_step_recipe();
  ModelConfig cfg = tiny_config(FusionMode::concat);
  cfg.d_model = 16;
  cfg.lstm_hidden = 8;
  WorkflowModel m(cfg, vocab_for(r), 21);
  TrainOptions opt;
  opt.epochs = 400;
  opt.batch_recipes = 1;
  opt.lr = 1e-2;
  opt.seed = 21;
  auto log = model::train(m, {&r}, {}, opt);
  CHECK(log.epochs.back().mean_loss < 0.05);
  CHECK(m.predict(r) == *r.gold_workflow);
}

TEST_CASE("predictions are structurally valid workflows") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::joint_transformer), vocab_for(r), 22);
  auto g = m.predict(r);
  CHECK(g.n == 4);
  CHECK_NOTHROW(g.validate());

  auto two = testutil::make_recipe("r2", {"mix it", "bake it"});
  auto g2 = m.predict(two);
  const bool empty_or_single =
      g2.edges.empty() || g2.edges == std::set<std::pair<int, int>>{{0, 1}};
  CHECK(empty_or_single);
}

TEST_CASE("checkpoint round trip preserves predictions exactly") {
  auto r = four_step_recipe();
  WorkflowModel m(tiny_config(FusionMode::joint_transformer), vocab_for(r), 23);
  const std::string path =
      (std::filesystem::temp_directory_path() / "rf_model_ck.json").string();
  model::save_checkpoint(m, path, 23);
  auto loaded = model::load_checkpoint(path);
  CHECK(loaded.seed == 23);
  CHECK(loaded.model.config().fusion_mode == FusionMode::joint_transformer);
  auto a = m.decode_relations(r);
  auto b = loaded.model.decode_relations(r);
  for (int i = 1; i < 4; ++i) {
    for (int j = 0; j < i; ++j) CHECK(a.at(i, j) == b.at(i, j));
  }
}

TEST_CASE("model config JSON round trip and validation") {
  ModelConfig c = tiny_config(FusionMode::concat);
  ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back.d_model == c.d_model);
  CHECK(back.fusion_mode == c.fusion_mode);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"bogus\":1}"), ConfigError);
  ModelConfig bad = c;
  bad.n_heads = 3;  // does not divide d_model = 8
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(fusion_mode_from_string("nope"), ConfigError);
}
