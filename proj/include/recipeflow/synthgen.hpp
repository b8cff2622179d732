#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "recipeflow/core.hpp"

namespace recipeflow::synthgen {

struct GenConfig {
  int n_recipes = 2000;
  int steps_min = 6;
  int steps_max = 12;
  int d_img = 40;
  int n_ingredients = 40;      // ingredient vocabulary size, <= d_img
  double parent_geometric_p = 0.2;
  double p_text_only = 0.4;    // edge visibility mix, must sum to 1
  double p_image_only = 0.3;
  double p_both = 0.3;
  double noise_sigma = 0.25;
  uint64_t seed = 42;

  void validate() const;
  std::string to_json() const;
  static GenConfig from_json(const std::string& text);
};

enum class Visibility { text, image, both };
std::string to_string(Visibility v);
Visibility visibility_from_string(const std::string& s);

struct EdgeVisibility {
  int j = 0, i = 0;
  Visibility vis = Visibility::text;
};

struct GenResult {
  core::Dataset dataset;
  // recipe id -> per-edge visibility classes, the side channel acceptance
  // tests use to stratify scores.
  std::map<std::string, std::vector<EdgeVisibility>> visibility;
};

// Plants a converging DAG per recipe and realizes each edge through text
// (parent product mentioned by name), images (parent basis vector mixed into
// the child's features), or both. Deterministic given the seed; recipes use
// independent derived sub-seeds.
GenResult generate(const GenConfig& config);

// Left-to-right scan keeping a frame only if its cosine similarity with the
// most recently kept frame is <= tau. The first frame is always kept.
std::vector<int> dedup_frames(const std::vector<std::vector<double>>& features, double tau);

std::string visibility_to_json(const std::map<std::string, std::vector<EdgeVisibility>>& vis);
std::map<std::string, std::vector<EdgeVisibility>> visibility_from_json(const std::string& text);

}  // namespace recipeflow::synthgen
