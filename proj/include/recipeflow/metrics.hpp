#pragma once

#include <string>
#include <vector>

#include "recipeflow/core.hpp"

namespace recipeflow::metrics {

using core::WorkflowGraph;

struct MetricsReport {
  double edge_p = 0, edge_r = 0, edge_f1 = 0;
  double recipe_p = 0, recipe_r = 0, recipe_f1 = 0;
  double avg_p = 0, avg_r = 0, avg_f1 = 0;
  int n_recipes = 0;
  long long n_gold_edges = 0;
  long long n_pred_edges = 0;

  std::string to_json() const;          // flat object, stable key order
  std::string table_row() const;        // edge/recipe/average P R F1 in percent
};

// Harmonic mean; 0 when p + r == 0.
double f1(double p, double r);

// Edge-level metrics pool counts over all recipes; recipe-level metrics
// average per-recipe ratios. A per-recipe ratio with an empty denominator
// counts 1 if both edge sets are empty, else 0.
MetricsReport evaluate(const std::vector<WorkflowGraph>& gold,
                       const std::vector<WorkflowGraph>& pred);

// Agreement between two binary label vectors, chance-corrected with
// marginal-product expected agreement. Returns 1 when expected agreement is 1.
double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace recipeflow::metrics
