#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "recipeflow/errors.hpp"

namespace recipeflow::core {

// Directed acyclic graph over step indices. Every edge (j, i) points forward
// in recipe order (j < i), so acyclicity is structural.
struct WorkflowGraph {
  int n = 0;
  std::set<std::pair<int, int>> edges;

  WorkflowGraph() = default;
  explicit WorkflowGraph(int n_) : n(n_) {}
  WorkflowGraph(int n_, std::set<std::pair<int, int>> e) : n(n_), edges(std::move(e)) {}

  bool has_edge(int j, int i) const { return edges.count({j, i}) > 0; }
  // Throws ValidationError unless 0 <= j < i < n and the edge is new.
  void add_edge(int j, int i);
  void validate(const std::string& context = "") const;

  bool operator==(const WorkflowGraph&) const = default;
};

struct CookingStep {
  int index = 0;
  std::vector<std::string> text;            // lowercased tokens, non-empty
  std::vector<std::vector<double>> images;  // feature vectors, all of dim d_img

  bool operator==(const CookingStep&) const = default;
};

struct Recipe {
  std::string id;
  std::vector<CookingStep> steps;
  std::optional<WorkflowGraph> gold_workflow;

  int n() const { return static_cast<int>(steps.size()); }
  void validate() const;

  bool operator==(const Recipe&) const = default;
};

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

using Vocab = std::map<std::string, int>;

struct Dataset {
  std::vector<Recipe> recipes;
  int d_img = 0;  // shared image feature dimension; 0 when no step has images
  Vocab vocab;    // built from the training split; derived state, not serialized

  void validate() const;

  // vocab is derived from a split choice, not part of the stored dataset.
  bool operator==(const Dataset& o) const {
    return recipes == o.recipes && d_img == o.d_img;
  }
};

// Lowercases and splits on whitespace; punctuation characters become
// single-character tokens. Bytes outside ASCII are kept inside word runs.
std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// JSON Lines, one recipe per line:
//   {"id": str, "steps": [{"text": str, "image_features": [[f,...],...]},...],
//    "edges": [[j,i],...]}
// "edges" omitted or null marks an unlabeled recipe.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

// Tokens appearing >= min_count times get ids >= 2, assigned by
// (count desc, token asc). Always contains <pad>=0 and <unk>=1.
Vocab build_vocab(const std::vector<Recipe>& recipes, int min_count = 1);
int vocab_size(const Vocab& vocab);
std::vector<int> encode_tokens(const Vocab& vocab, const std::vector<std::string>& tokens);

}  // namespace recipeflow::core
