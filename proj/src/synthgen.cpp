#include "recipeflow/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "recipeflow/tensor.hpp"

namespace recipeflow::synthgen {

using tensor::normal_real;
using tensor::uniform_int;
using tensor::uniform_real;

namespace {

const std::vector<std::string>& ingredient_nouns() {
  static const std::vector<std::string> v = {
      "flour",    "sugar",   "butter",  "eggs",    "milk",      "cream",   "cheese",  "salt",
      "pepper",   "onions",  "garlic",  "tomatoes", "basil",    "oregano", "chicken", "beef",
      "pork",     "rice",    "pasta",   "beans",   "carrots",   "celery",  "potatoes",
      "mushrooms", "spinach", "lemons",  "apples",  "berries",   "chocolate", "vanilla",
      "honey",    "yeast",   "broth",   "wine",    "vinegar",   "oil",     "nuts",    "raisins",
      "oats",     "syrup"};
  return v;
}

const std::vector<std::string>& action_verbs() {
  static const std::vector<std::string> v = {"mix",  "stir", "whisk",  "fold", "add",  "combine",
                                             "pour", "blend", "beat",  "heat", "simmer", "spread"};
  return v;
}

const std::vector<std::string>& container_nouns() {
  static const std::vector<std::string> v = {"bowl", "pan", "pot", "plate", "skillet"};
  return v;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void GenConfig::validate() const {
  if (n_recipes < 0) throw ConfigError("n_recipes must be nonnegative");
  if (steps_min < 2 || steps_max < steps_min) {
    throw ConfigError("steps range invalid: need 2 <= steps_min <= steps_max");
  }
  if (d_img < 1) throw ConfigError("d_img must be >= 1");
  if (n_ingredients < steps_max) {
    throw ConfigError("n_ingredients must be >= steps_max so per-recipe products are distinct");
  }
  if (n_ingredients > d_img) {
    throw ConfigError("n_ingredients must be <= d_img (basis vectors are coordinate axes)");
  }
  if (!(parent_geometric_p >= 0.0 && parent_geometric_p < 1.0)) {
    throw ConfigError("parent_geometric_p must be in [0, 1)");
  }
  const double s = p_text_only + p_image_only + p_both;
  if (p_text_only < 0 || p_image_only < 0 || p_both < 0 || std::abs(s - 1.0) > 1e-9) {
    throw ConfigError("visibility probabilities must be nonnegative and sum to 1");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
}

std::string to_string(Visibility v) {
  switch (v) {
    case Visibility::text: return "text";
    case Visibility::image: return "image";
    case Visibility::both: return "both";
  }
  throw ConfigError("invalid visibility value");
}

Visibility visibility_from_string(const std::string& s) {
  if (s == "text") return Visibility::text;
  if (s == "image") return Visibility::image;
  if (s == "both") return Visibility::both;
  throw ConfigError("unknown visibility class: " + s);
}

namespace {

struct PlannedStep {
  int ingredient = 0;                    // index into the per-run ingredient table
  std::vector<int> text_parents;         // parents mentioned by product name
  std::vector<int> image_parents;        // parents mixed into image features
  bool is_root = false;
};

Visibility sample_visibility(const GenConfig& cfg, std::mt19937_64& rng) {
  const double u = uniform_real(rng);
  if (u < cfg.p_text_only) return Visibility::text;
  if (u < cfg.p_text_only + cfg.p_image_only) return Visibility::image;
  return Visibility::both;
}

core::Recipe generate_recipe(const GenConfig& cfg, int index,
                             std::vector<EdgeVisibility>& vis_out) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ (0x1234ABCDULL + static_cast<uint64_t>(index))));
  const int n = uniform_int(rng, cfg.steps_min, cfg.steps_max);

  // Plant the DAG. Steps 1..n-2 pick a uniform parent with prob 0.8 (else a
  // new root) plus geometric extras; the final step absorbs every sink so the
  // whole recipe converges.
  std::vector<std::vector<int>> parents(n);
  std::vector<int> out_degree(n, 0);
  for (int i = 1; i < n - 1; ++i) {
    if (uniform_real(rng) < 0.8) {
      std::vector<int> pool;
      for (int c = 0; c < i; ++c) pool.push_back(c);
      const int first = pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)];
      parents[i].push_back(first);
      pool.erase(std::find(pool.begin(), pool.end(), first));
      while (!pool.empty() && uniform_real(rng) < cfg.parent_geometric_p) {
        const int extra = pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)];
        parents[i].push_back(extra);
        pool.erase(std::find(pool.begin(), pool.end(), extra));
      }
      std::sort(parents[i].begin(), parents[i].end());
      for (int p : parents[i]) ++out_degree[p];
    }
  }
  for (int p = 0; p < n - 1; ++p) {
    if (out_degree[p] == 0) {
      parents[n - 1].push_back(p);
      ++out_degree[p];
    }
  }

  // Distinct per-recipe products: one ingredient per step.
  std::vector<int> ing_pool(cfg.n_ingredients);
  for (int k = 0; k < cfg.n_ingredients; ++k) ing_pool[k] = k;
  for (int k = static_cast<int>(ing_pool.size()) - 1; k > 0; --k) {
    std::swap(ing_pool[k], ing_pool[uniform_int(rng, 0, k)]);
  }

  std::vector<PlannedStep> plan(n);
  for (int i = 0; i < n; ++i) {
    plan[i].ingredient = ing_pool[i];
    plan[i].is_root = parents[i].empty();
    for (int p : parents[i]) {
      const Visibility v = sample_visibility(cfg, rng);
      vis_out.push_back({p, i, v});
      if (v == Visibility::text || v == Visibility::both) plan[i].text_parents.push_back(p);
      if (v == Visibility::image || v == Visibility::both) plan[i].image_parents.push_back(p);
    }
  }

  core::Recipe r;
  r.id = "synth-" + std::to_string(index);
  core::WorkflowGraph g(n);
  for (int i = 0; i < n; ++i) {
    for (int p : parents[i]) g.edges.insert({p, i});
  }
  r.gold_workflow = std::move(g);

  int roots_seen = 0;
  for (int i = 0; i < n; ++i) {
    core::CookingStep step;
    step.index = i;
    const std::string& ing = ingredient_nouns()[plan[i].ingredient];
    const std::string& verb = action_verbs()[uniform_int(
        rng, 0, static_cast<int>(action_verbs().size()) - 1)];
    std::string text;
    if (plan[i].is_root) {
      const std::string& container = container_nouns()[uniform_int(
          rng, 0, static_cast<int>(container_nouns().size()) - 1)];
      // Parallel branches after the first announce themselves with "another".
      const std::string article = roots_seen == 0 ? "a" : "another";
      ++roots_seen;
      text = verb + " the " + ing + " in " + article + " " + container;
    } else {
      text = verb;
      bool first = true;
      for (int p : plan[i].text_parents) {
        text += (first ? " the " : " and the ") + ingredient_nouns()[plan[p].ingredient];
        first = false;
      }
      const bool has_hidden_parent =
          plan[i].image_parents.size() + plan[i].text_parents.size() > 0 &&
          plan[i].text_parents.size() <
              static_cast<size_t>(parents[i].size());
      if (has_hidden_parent) {
        // Image-visible parents hide behind a generic anaphor.
        text += (first ? " the mixture" : " and the mixture");
        first = false;
      }
      text += " to make the " + ing;
    }
    step.text = core::tokenize(text);

    const int m = uniform_int(rng, 1, 3);
    for (int k = 0; k < m; ++k) {
      std::vector<double> img(cfg.d_img, 0.0);
      img[plan[i].ingredient] += 1.0;
      for (int p : plan[i].image_parents) img[plan[p].ingredient] += 1.0;
      for (int c = 0; c < cfg.d_img; ++c) img[c] += cfg.noise_sigma * normal_real(rng);
      step.images.push_back(std::move(img));
    }
    r.steps.push_back(std::move(step));
  }
  return r;
}

}  // namespace

GenResult generate(const GenConfig& config) {
  config.validate();
  GenResult out;
  out.dataset.d_img = config.d_img;
  out.dataset.recipes.reserve(config.n_recipes);
  for (int idx = 0; idx < config.n_recipes; ++idx) {
    std::vector<EdgeVisibility> vis;
    core::Recipe r = generate_recipe(config, idx, vis);
    out.visibility[r.id] = std::move(vis);
    out.dataset.recipes.push_back(std::move(r));
  }
  out.dataset.validate();
  return out;
}

std::vector<int> dedup_frames(const std::vector<std::vector<double>>& features, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) {
    throw ArgumentError("dedup_frames: tau must be in [-1, 1], got " + std::to_string(tau));
  }
  std::vector<int> kept;
  for (size_t k = 0; k < features.size(); ++k) {
    if (kept.empty()) {
      kept.push_back(static_cast<int>(k));
      continue;
    }
    const auto& last = features[kept.back()];
    const auto& cur = features[k];
    if (last.size() != cur.size()) {
      throw ArgumentError("dedup_frames: feature dimension mismatch at frame " +
                          std::to_string(k));
    }
    double dot = 0, na = 0, nb = 0;
    for (size_t c = 0; c < cur.size(); ++c) {
      dot += last[c] * cur[c];
      na += last[c] * last[c];
      nb += cur[c] * cur[c];
    }
    const double sim = (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
    if (sim <= tau) kept.push_back(static_cast<int>(k));
  }
  return kept;
}

std::string GenConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_recipes"] = n_recipes;
  j["steps_min"] = steps_min;
  j["steps_max"] = steps_max;
  j["d_img"] = d_img;
  j["n_ingredients"] = n_ingredients;
  j["parent_geometric_p"] = parent_geometric_p;
  j["visibility"] = {p_text_only, p_image_only, p_both};
  j["noise_sigma"] = noise_sigma;
  j["seed"] = seed;
  return j.dump();
}

GenConfig GenConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("gen config: ") + e.what());
  }
  GenConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "n_recipes") c.n_recipes = val.get<int>();
    else if (key == "steps_min") c.steps_min = val.get<int>();
    else if (key == "steps_max") c.steps_max = val.get<int>();
    else if (key == "d_img") c.d_img = val.get<int>();
    else if (key == "n_ingredients") c.n_ingredients = val.get<int>();
    else if (key == "parent_geometric_p") c.parent_geometric_p = val.get<double>();
    else if (key == "visibility") {
      const auto v = val.get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("gen config: visibility needs 3 probabilities");
      c.p_text_only = v[0];
      c.p_image_only = v[1];
      c.p_both = v[2];
    } else if (key == "noise_sigma") c.noise_sigma = val.get<double>();
    else if (key == "seed") c.seed = val.get<uint64_t>();
    else throw ConfigError("gen config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string visibility_to_json(const std::map<std::string, std::vector<EdgeVisibility>>& vis) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [id, edges] : vis) {
    auto arr = nlohmann::ordered_json::array();
    for (const EdgeVisibility& e : edges) {
      arr.push_back({e.j, e.i, to_string(e.vis)});
    }
    j[id] = std::move(arr);
  }
  return j.dump();
}

std::map<std::string, std::vector<EdgeVisibility>> visibility_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("visibility sidecar: ") + e.what());
  }
  std::map<std::string, std::vector<EdgeVisibility>> out;
  for (const auto& [id, arr] : j.items()) {
    std::vector<EdgeVisibility> edges;
    for (const auto& e : arr) {
      if (!e.is_array() || e.size() != 3) {
        throw ParseError("visibility sidecar: entries must be [j, i, class]");
      }
      edges.push_back({e[0].get<int>(), e[1].get<int>(),
                       visibility_from_string(e[2].get<std::string>())});
    }
    out[id] = std::move(edges);
  }
  return out;
}

}  // namespace recipeflow::synthgen
