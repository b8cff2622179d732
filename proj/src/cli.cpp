#include "recipeflow/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "json.hpp"
#include "recipeflow/baselines.hpp"

namespace recipeflow::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

SplitIndices split_dataset(int n, uint64_t seed, double f_train, double f_val) {
  if (n < 0 || f_train < 0 || f_val < 0 || f_train + f_val > 1.0 + 1e-12) {
    throw ArgumentError("split_dataset: invalid fractions");
  }
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::swap(idx[i], idx[tensor::uniform_int(rng, 0, i)]);
  }
  const int n_train = static_cast<int>(std::floor(f_train * n));
  const int n_val = static_cast<int>(std::floor(f_val * n));
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

void RunConfig::validate() const {
  check_mode(mode);
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must be in [0,1]");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_recipes < 1) throw ConfigError("batch_recipes must be >= 1");
  if (split_train <= 0 || split_val < 0 || split_train + split_val > 1.0) {
    throw ConfigError("split fractions must be positive and sum to at most 1");
  }
}

bool is_model_mode(const std::string& mode) {
  return mode == "text_only" || mode == "image_only" || mode == "concat" ||
         mode == "joint_transformer";
}

bool is_baseline_mode(const std::string& mode) {
  return mode == "handcrafted" || mode == "handcrafted_mm" || mode == "imgsim" ||
         mode == "ffpair";
}

void check_mode(const std::string& mode) {
  if (!is_model_mode(mode) && !is_baseline_mode(mode)) {
    throw ConfigError("unknown mode: " + mode);
  }
}

RunConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "seed") {
      c.seed = val.get<uint64_t>();
      c.seed_set = true;
    } else if (key == "mode") c.mode = val.get<std::string>();
    else if (key == "theta") {
      c.theta = val.get<double>();
      c.theta_set = true;
    } else if (key == "epochs") c.epochs = val.get<int>();
    else if (key == "lr") c.lr = val.get<double>();
    else if (key == "batch_recipes") c.batch_recipes = val.get<int>();
    else if (key == "patience") c.patience = val.get<int>();
    else if (key == "min_count") c.min_count = val.get<int>();
    else if (key == "split") {
      const auto v = val.get<std::vector<double>>();
      if (v.size() != 3 || std::abs(v[0] + v[1] + v[2] - 1.0) > 1e-9) {
        throw ConfigError("config: split must be [train, val, test] summing to 1");
      }
      c.split_train = v[0];
      c.split_val = v[1];
    } else if (key == "model") c.model = model::ModelConfig::from_json(val.dump());
    else if (key == "gen") c.gen = synthgen::GenConfig::from_json(val.dump());
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

void require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ArgumentError(std::string("missing required ") + what);
}

void refuse_existing(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw IoError("output exists (use --force to overwrite): " + path);
  }
}

std::vector<const core::Recipe*> pick(const core::Dataset& ds, const std::vector<int>& idx) {
  std::vector<const core::Recipe*> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(&ds.recipes[i]);
  return out;
}

void require_gold(const std::vector<const core::Recipe*>& recipes, const char* what) {
  for (const core::Recipe* r : recipes) {
    if (!r->gold_workflow) {
      throw DataError(std::string(what) + ": recipe '" + r->id + "' has no gold workflow");
    }
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// A loaded system that maps a recipe to a workflow graph.
struct Predictor {
  std::string mode;
  uint64_t seed = 0;
  double theta = 0.5;
  std::function<graphkit::WorkflowGraph(const core::Recipe&, double)> predict;
};

Predictor load_predictor(const std::string& checkpoint_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(checkpoint_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  Predictor p;
  p.mode = j.value("mode", std::string());
  p.seed = j.value("seed", uint64_t{0});
  check_mode(p.mode);
  if (is_model_mode(p.mode)) {
    auto loaded = std::make_shared<model::LoadedModel>(model::load_checkpoint(checkpoint_path));
    p.theta = loaded->model.config().theta;
    p.predict = [loaded](const core::Recipe& r, double theta) {
      return graphkit::build_workflow(loaded->model.decode_relations(r), theta);
    };
    return p;
  }
  p.theta = j.value("theta", 0.5);
  if (p.mode == "ffpair") {
    const int d_img = j.at("d_img").get<int>();
    const int hidden = j.at("hidden").get<int>();
    auto det = std::make_shared<baselines::FfPairDetector>(d_img, hidden, 0);
    tensor::params_from_json(det->params(), j.at("tensors").dump());
    p.predict = [det](const core::Recipe& r, double theta) {
      return baselines::baseline_predict(
          r, [&det](const core::Recipe& rr, int a, int b) { return det->score(rr, a, b); },
          theta);
    };
    return p;
  }
  const auto weights = std::make_shared<std::vector<double>>(
      j.at("weights").get<std::vector<double>>());
  baselines::FeatureSet fset = p.mode == "handcrafted" ? baselines::FeatureSet::text6
                               : p.mode == "handcrafted_mm"
                                   ? baselines::FeatureSet::multimodal9
                                   : baselines::FeatureSet::image4;
  p.predict = [weights, fset](const core::Recipe& r, double theta) {
    return baselines::baseline_predict(
        r,
        [&weights, fset](const core::Recipe& rr, int a, int b) {
          return baselines::logistic_score(*weights, baselines::pair_features(rr, a, b, fset));
        },
        theta);
  };
  return p;
}

std::string csv_log(const std::vector<model::EpochStats>& epochs) {
  std::string s = "epoch,mean_loss,val_edge_f1\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.mean_loss, e.val_edge_f1);
    s += buf;
  }
  return s;
}

}  // namespace

int cmd_generate(const RunConfig& cfg) {
  cfg.validate();
  require_path(cfg.out, "--out path for the generated dataset");
  refuse_existing(cfg.out, cfg.force);
  synthgen::GenConfig gen = cfg.gen;
  if (cfg.seed_set) gen.seed = cfg.seed;
  synthgen::GenResult res = synthgen::generate(gen);
  core::save_dataset(res.dataset, cfg.out);
  write_text_file(cfg.out + ".vis.json", synthgen::visibility_to_json(res.visibility));

  long long steps = 0, steps_with_images = 0, images = 0, tokens = 0, edges = 0;
  std::map<std::string, long long> vis_counts{{"text", 0}, {"image", 0}, {"both", 0}};
  for (const core::Recipe& r : res.dataset.recipes) {
    steps += r.n();
    edges += static_cast<long long>(r.gold_workflow->edges.size());
    for (const core::CookingStep& s : r.steps) {
      if (!s.images.empty()) ++steps_with_images;
      images += static_cast<long long>(s.images.size());
      tokens += static_cast<long long>(s.text.size());
    }
  }
  for (const auto& [id, list] : res.visibility) {
    for (const auto& e : list) ++vis_counts[synthgen::to_string(e.vis)];
  }
  const double n_recipes = std::max<long long>(1, res.dataset.recipes.size());
  const double n_steps = std::max<long long>(1, steps);
  ordered_json stats;
  stats["n_recipes"] = res.dataset.recipes.size();
  stats["avg_steps_per_recipe"] = steps / n_recipes;
  stats["avg_images_per_step"] = images / n_steps;
  stats["pct_steps_with_images"] = 100.0 * steps_with_images / n_steps;
  stats["avg_tokens_per_step"] = tokens / n_steps;
  stats["n_edges"] = edges;
  stats["avg_edges_per_recipe"] = edges / n_recipes;
  stats["visibility_counts"] = vis_counts;
  stats["d_img"] = res.dataset.d_img;
  write_text_file(cfg.out + ".stats.json", stats.dump(2) + "\n");
  std::cout << stats.dump(2) << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  cfg.validate();
  require_path(cfg.dataset, "--dataset path");
  require_path(cfg.checkpoint, "--checkpoint path");
  core::Dataset ds = core::load_dataset(cfg.dataset);
  if (ds.recipes.empty()) throw DataError("train: dataset is empty");
  const SplitIndices split =
      split_dataset(static_cast<int>(ds.recipes.size()), cfg.seed, cfg.split_train, cfg.split_val);
  auto train_set = pick(ds, split.train);
  auto val_set = pick(ds, split.val);
  require_gold(train_set, "train");
  require_gold(val_set, "train");
  const std::string log_path = cfg.log_path.empty() ? cfg.checkpoint + ".log.csv" : cfg.log_path;

  if (is_model_mode(cfg.mode)) {
    model::ModelConfig mc = cfg.model;
    mc.fusion_mode = model::fusion_mode_from_string(cfg.mode);
    mc.theta = cfg.theta;
    if (ds.d_img > 0) mc.d_img = ds.d_img;
    core::Vocab vocab = core::build_vocab([&] {
      std::vector<core::Recipe> rs;
      rs.reserve(train_set.size());
      for (const core::Recipe* r : train_set) rs.push_back(*r);
      return rs;
    }(), cfg.min_count);
    model::WorkflowModel m(mc, std::move(vocab), cfg.seed);
    model::TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.lr = cfg.lr;
    opt.batch_recipes = cfg.batch_recipes;
    opt.seed = cfg.seed;
    opt.patience = cfg.patience;
    opt.verbose = cfg.verbose;
    model::TrainLog log = model::train(m, train_set, val_set, opt);
    model::save_checkpoint(m, cfg.checkpoint, cfg.seed);
    write_text_file(log_path, csv_log(log.epochs));
    return 0;
  }

  // Pairwise baselines share the balanced sampler.
  std::mt19937_64 rng(cfg.seed);
  auto samples = baselines::balanced_pair_samples(train_set, rng);
  ordered_json ck;
  ck["format_version"] = 1;
  ck["mode"] = cfg.mode;
  ck["seed"] = cfg.seed;
  ck["theta"] = cfg.theta;
  std::vector<model::EpochStats> log_rows;
  if (cfg.mode == "ffpair") {
    const int d_img = ds.d_img > 0 ? ds.d_img : cfg.model.d_img;
    baselines::FfPairDetector det(d_img, 32, cfg.seed);
    auto losses = baselines::train_ff_detector(det, samples, cfg.epochs, cfg.lr, cfg.seed);
    ck["d_img"] = d_img;
    ck["hidden"] = det.hidden();
    ck["tensors"] = ordered_json::parse(tensor::params_to_json(det.params()));
    for (size_t e = 0; e < losses.size(); ++e) {
      log_rows.push_back({static_cast<int>(e) + 1, losses[e], 0.0, 0.0});
    }
  } else {
    baselines::FeatureSet fset = cfg.mode == "handcrafted" ? baselines::FeatureSet::text6
                                 : cfg.mode == "handcrafted_mm"
                                     ? baselines::FeatureSet::multimodal9
                                     : baselines::FeatureSet::image4;
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    features.reserve(samples.size());
    for (const auto& s : samples) {
      features.push_back(baselines::pair_features(*s.recipe, s.j, s.i, fset));
      labels.push_back(s.label);
    }
    const auto w = baselines::train_linear_detector(features, labels, 1e-4, 800);
    ck["weights"] = w;
    double loss = 0;
    for (size_t s = 0; s < features.size(); ++s) {
      const double p =
          std::min(1.0 - 1e-7, std::max(1e-7, baselines::logistic_score(w, features[s])));
      loss += labels[s] ? -std::log(p) : -std::log(1.0 - p);
    }
    log_rows.push_back({1, loss / static_cast<double>(features.size()), 0.0, 0.0});
  }
  write_text_file(cfg.checkpoint, ck.dump());
  write_text_file(log_path, csv_log(log_rows));
  return 0;
}

metrics::MetricsReport eval_report(const RunConfig& cfg) {
  cfg.validate();
  require_path(cfg.dataset, "--dataset path");
  require_path(cfg.checkpoint, "--checkpoint path");
  core::Dataset ds = core::load_dataset(cfg.dataset);
  if (ds.recipes.empty()) throw DataError("eval: dataset is empty");
  Predictor pred = load_predictor(cfg.checkpoint);
  const uint64_t seed = cfg.seed_set ? cfg.seed : pred.seed;
  const double theta = cfg.theta_set ? cfg.theta : pred.theta;
  const SplitIndices split =
      split_dataset(static_cast<int>(ds.recipes.size()), seed, cfg.split_train, cfg.split_val);
  auto test_set = pick(ds, split.test);
  if (test_set.empty()) throw DataError("eval: empty test split");
  require_gold(test_set, "eval");

  std::vector<graphkit::WorkflowGraph> gold, predicted;
  gold.reserve(test_set.size());
  for (const core::Recipe* r : test_set) {
    gold.push_back(cfg.reduce_gold ? graphkit::transitive_reduce(*r->gold_workflow)
                                   : *r->gold_workflow);
    predicted.push_back(pred.predict(*r, theta));
  }
  metrics::MetricsReport rep = metrics::evaluate(gold, predicted);

  std::cout << pred.mode << " | " << rep.table_row() << "\n";

  // Per-visibility-class recall when the generator sidecar is available.
  const std::string vis_path = cfg.vis_path.empty() ? cfg.dataset + ".vis.json" : cfg.vis_path;
  if (fs::exists(vis_path)) {
    auto vis = synthgen::visibility_from_json(read_text_file(vis_path));
    std::map<std::string, long long> total{{"text", 0}, {"image", 0}, {"both", 0}};
    std::map<std::string, long long> hit{{"text", 0}, {"image", 0}, {"both", 0}};
    for (size_t k = 0; k < test_set.size(); ++k) {
      auto it = vis.find(test_set[k]->id);
      if (it == vis.end()) continue;
      for (const auto& e : it->second) {
        const std::string cls = synthgen::to_string(e.vis);
        ++total[cls];
        if (predicted[k].has_edge(e.j, e.i)) ++hit[cls];
      }
    }
    for (const auto& [cls, tot] : total) {
      if (tot == 0) continue;
      std::printf("visibility %-5s  gold %6lld  recalled %6lld  recall %.4f\n", cls.c_str(), tot,
                  hit[cls], static_cast<double>(hit[cls]) / static_cast<double>(tot));
    }
  }
  if (!cfg.out.empty()) {
    write_text_file(cfg.out, rep.to_json() + "\n");
  }
  return rep;
}

int cmd_eval(const RunConfig& cfg) {
  eval_report(cfg);
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  cfg.validate();
  require_path(cfg.dataset, "--dataset path with recipes to predict");
  require_path(cfg.checkpoint, "--checkpoint path");
  require_path(cfg.out, "--out path for predicted workflows");
  core::Dataset ds = core::load_dataset(cfg.dataset);
  Predictor pred = load_predictor(cfg.checkpoint);
  const double theta = cfg.theta_set ? cfg.theta : pred.theta;
  std::ofstream out(cfg.out);
  if (!out) throw IoError("cannot open file for writing: " + cfg.out);
  for (const core::Recipe& r : ds.recipes) {
    graphkit::WorkflowGraph g = pred.predict(r, theta);
    ordered_json j;
    j["id"] = r.id;
    j["n"] = g.n;
    auto edges = ordered_json::array();
    for (const auto& [a, b] : g.edges) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    out << j.dump() << '\n';
    if (cfg.emit_dot) {
      write_text_file(cfg.out + "." + r.id + ".dot", graphkit::export_dot(r, g));
    }
  }
  if (!out) throw IoError("write failed: " + cfg.out);
  return 0;
}

}  // namespace recipeflow::cli
