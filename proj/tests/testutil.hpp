#pragma once

// Shared test helpers and the independent oracles the suites check against.
// Everything here must stay independent of the library code paths it verifies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "recipeflow/core.hpp"
#include "recipeflow/metrics.hpp"
#include "recipeflow/tensor.hpp"

namespace testutil {

using recipeflow::core::Recipe;
using recipeflow::core::WorkflowGraph;

inline Recipe make_recipe(const std::string& id, const std::vector<std::string>& texts,
                          const std::vector<std::vector<std::vector<double>>>& images = {},
                          const std::vector<std::pair<int, int>>* edges = nullptr) {
  Recipe r;
  r.id = id;
  for (size_t k = 0; k < texts.size(); ++k) {
    recipeflow::core::CookingStep s;
    s.index = static_cast<int>(k);
    s.text = recipeflow::core::tokenize(texts[k]);
    if (k < images.size()) s.images = images[k];
    r.steps.push_back(std::move(s));
  }
  if (edges) {
    WorkflowGraph g(r.n());
    for (auto [j, i] : *edges) g.add_edge(j, i);
    r.gold_workflow = std::move(g);
  }
  return r;
}

inline WorkflowGraph random_dag(std::mt19937_64& rng, int n, double edge_prob) {
  WorkflowGraph g(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      if (u(rng) < edge_prob) g.edges.insert({j, i});
    }
  }
  return g;
}

// Reachability by repeated boolean matrix multiplication (a deliberately
// different route than the library's Floyd-Warshall closure).
inline std::vector<std::vector<bool>> closure_by_matrix_power(const WorkflowGraph& g) {
  const int n = g.n;
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (const auto& [j, i] : g.edges) adj[j][i] = true;
  auto reach = adj;
  for (int step = 0; step < n; ++step) {
    auto next = reach;
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (next[a][b]) continue;
        for (int k = 0; k < n; ++k) {
          if (reach[a][k] && adj[k][b]) {
            next[a][b] = true;
            break;
          }
        }
      }
    }
    if (next == reach) break;
    reach = next;
  }
  return reach;
}

// Brute-force re-implementation of the evaluation formulas with std::set
// arithmetic, summing in recipe order like the library does.
inline recipeflow::metrics::MetricsReport brute_force_evaluate(
    const std::vector<WorkflowGraph>& gold, const std::vector<WorkflowGraph>& pred) {
  recipeflow::metrics::MetricsReport m;
  const int N = static_cast<int>(gold.size());
  long long inter_sum = 0, gold_sum = 0, pred_sum = 0;
  double p_sum = 0, r_sum = 0;
  for (int k = 0; k < N; ++k) {
    std::vector<std::pair<int, int>> inter;
    std::set_intersection(gold[k].edges.begin(), gold[k].edges.end(), pred[k].edges.begin(),
                          pred[k].edges.end(), std::back_inserter(inter));
    const long long i = static_cast<long long>(inter.size());
    const long long ng = static_cast<long long>(gold[k].edges.size());
    const long long np = static_cast<long long>(pred[k].edges.size());
    inter_sum += i;
    gold_sum += ng;
    pred_sum += np;
    p_sum += np > 0 ? double(i) / double(np) : (ng == 0 ? 1.0 : 0.0);
    r_sum += ng > 0 ? double(i) / double(ng) : (np == 0 ? 1.0 : 0.0);
  }
  m.n_recipes = N;
  m.n_gold_edges = gold_sum;
  m.n_pred_edges = pred_sum;
  m.edge_p = pred_sum > 0 ? double(inter_sum) / double(pred_sum) : (gold_sum == 0 ? 1.0 : 0.0);
  m.edge_r = gold_sum > 0 ? double(inter_sum) / double(gold_sum) : (pred_sum == 0 ? 1.0 : 0.0);
  m.edge_f1 = recipeflow::metrics::f1(m.edge_p, m.edge_r);
  m.recipe_p = p_sum / N;
  m.recipe_r = r_sum / N;
  m.recipe_f1 = recipeflow::metrics::f1(m.recipe_p, m.recipe_r);
  m.avg_p = (m.edge_p + m.recipe_p) / 2.0;
  m.avg_r = (m.edge_r + m.recipe_r) / 2.0;
  m.avg_f1 = (m.edge_f1 + m.recipe_f1) / 2.0;
  return m;
}

// Minimal DOT grammar checker: digraph NAME? { stmt* } where a stmt is a
// quoted node id with an optional [key="value"] list, an edge "a" -> "b",
// or a bare key=value line, each ending with ';'.
class DotChecker {
 public:
  explicit DotChecker(std::string text) : text_(std::move(text)) {}

  bool valid() {
    pos_ = 0;
    if (!word("digraph")) return false;
    skip_ws();
    if (peek() != '{') ident();
    if (!expect('{')) return false;
    while (true) {
      skip_ws();
      if (peek() == '}') break;
      if (!statement()) return false;
    }
    if (!expect('}')) return false;
    skip_ws();
    return pos_ == text_.size();
  }

 private:
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool expect(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool word(const std::string& w) {
    skip_ws();
    if (text_.compare(pos_, w.size(), w) == 0) {
      pos_ += w.size();
      return true;
    }
    return false;
  }
  bool ident() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    return pos_ > start;
  }
  bool quoted() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '"') return false;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    ++pos_;  // closing quote
    return true;
  }
  bool attr_list() {
    if (!expect('[')) return false;
    while (true) {
      if (!ident()) return false;
      if (!expect('=')) return false;
      skip_ws();
      if (peek() == '"') {
        if (!quoted()) return false;
      } else if (!ident()) {
        return false;
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      break;
    }
    return expect(']');
  }
  bool statement() {
    skip_ws();
    if (peek() == '"') {
      if (!quoted()) return false;
      skip_ws();
      if (peek() == '-') {
        if (!word("->")) return false;
        if (!quoted()) return false;
      } else if (peek() == '[') {
        if (!attr_list()) return false;
      }
      return expect(';');
    }
    // bare key=value, e.g. rankdir=TB
    if (!ident()) return false;
    if (!expect('=')) return false;
    if (!ident()) return false;
    return expect(';');
  }

  std::string text_;
  size_t pos_ = 0;
};

// Central finite differences over every element of every trainable parameter.
// repeatable_loss must rebuild the whole forward pass on each call.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline GradCheckResult finite_difference_check(recipeflow::tensor::ParameterStore& store,
                                               const std::function<double()>& loss_fn,
                                               const std::function<void()>& backward_fn,
                                               double h = 1e-4) {
  for (auto& p : store.all()) p.tensor.zero_grad();
  backward_fn();
  GradCheckResult res;
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    auto& vals = p.tensor.value();
    const auto grads = p.tensor.has_grad() ? p.tensor.grad() : std::vector<double>(vals.size(), 0);
    for (size_t k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      vals[k] = orig + h;
      const double up = loss_fn();
      vals[k] = orig - h;
      const double down = loss_fn();
      vals[k] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[k];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-2});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / scale);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace testutil
