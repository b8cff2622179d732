#pragma once

#include <string>
#include <vector>

#include "recipeflow/core.hpp"

namespace recipeflow::graphkit {

using core::Recipe;
using core::WorkflowGraph;

// Strictly lower-triangular matrix of independent edge probabilities:
// P(i, j) is the probability that step j is a prerequisite of step i, j < i.
class EdgeProbMatrix {
 public:
  EdgeProbMatrix() = default;
  explicit EdgeProbMatrix(int n) : n_(n), probs_(static_cast<size_t>(n) * (n - 1) / 2, 0.0) {}

  int n() const { return n_; }
  double at(int i, int j) const;
  void set(int i, int j, double p);  // throws on out-of-domain index or p outside [0,1]

 private:
  size_t index(int i, int j) const;
  int n_ = 0;
  std::vector<double> probs_;
};

// True iff a directed path of length >= 1 leads from src to dst.
bool has_path(const WorkflowGraph& g, int src, int dst);

// Removes every edge (j, i) for which the original graph has a path
// j -> ... -> i of length >= 2. Preserves reachability; idempotent.
WorkflowGraph transitive_reduce(const WorkflowGraph& g);

// Candidate edges are those with P(i, j) > theta (strict); the candidate
// graph is then transitively reduced.
WorkflowGraph build_workflow(const EdgeProbMatrix& p, double theta);

// DOT digraph with 1-indexed node labels carrying each step's first tokens.
std::string export_dot(const Recipe& r, const WorkflowGraph& g);

}  // namespace recipeflow::graphkit
