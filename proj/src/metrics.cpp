#include "recipeflow/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

namespace recipeflow::metrics {

double f1(double p, double r) {
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

MetricsReport evaluate(const std::vector<WorkflowGraph>& gold,
                       const std::vector<WorkflowGraph>& pred) {
  if (gold.size() != pred.size() || gold.empty()) {
    throw ArgumentError("evaluate: gold and pred must be non-empty and equal length (got " +
                        std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) + ")");
  }
  const int N = static_cast<int>(gold.size());
  long long inter_total = 0, gold_total = 0, pred_total = 0;
  double prec_sum = 0.0, rec_sum = 0.0;
  for (int i = 0; i < N; ++i) {
    if (gold[i].n != pred[i].n) {
      throw ArgumentError("evaluate: node count mismatch at recipe " + std::to_string(i));
    }
    long long inter = 0;
    for (const auto& e : pred[i].edges) {
      if (gold[i].edges.count(e)) ++inter;
    }
    const long long ng = static_cast<long long>(gold[i].edges.size());
    const long long np = static_cast<long long>(pred[i].edges.size());
    inter_total += inter;
    gold_total += ng;
    pred_total += np;
    prec_sum += np > 0 ? static_cast<double>(inter) / static_cast<double>(np)
                       : (ng == 0 ? 1.0 : 0.0);
    rec_sum += ng > 0 ? static_cast<double>(inter) / static_cast<double>(ng)
                      : (np == 0 ? 1.0 : 0.0);
  }
  MetricsReport m;
  m.n_recipes = N;
  m.n_gold_edges = gold_total;
  m.n_pred_edges = pred_total;
  m.edge_p = pred_total > 0 ? static_cast<double>(inter_total) / static_cast<double>(pred_total)
                            : (gold_total == 0 ? 1.0 : 0.0);
  m.edge_r = gold_total > 0 ? static_cast<double>(inter_total) / static_cast<double>(gold_total)
                            : (pred_total == 0 ? 1.0 : 0.0);
  m.edge_f1 = f1(m.edge_p, m.edge_r);
  m.recipe_p = prec_sum / N;
  m.recipe_r = rec_sum / N;
  m.recipe_f1 = f1(m.recipe_p, m.recipe_r);
  m.avg_p = (m.edge_p + m.recipe_p) / 2.0;
  m.avg_r = (m.edge_r + m.recipe_r) / 2.0;
  m.avg_f1 = (m.edge_f1 + m.recipe_f1) / 2.0;
  return m;
}

double cohens_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ArgumentError("cohens_kappa: label vectors must be non-empty and equal length");
  }
  const double n = static_cast<double>(a.size());
  double agree = 0, a1 = 0, b1 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0) == (b[i] != 0)) ++agree;
    if (a[i] != 0) ++a1;
    if (b[i] != 0) ++b1;
  }
  const double po = agree / n;
  const double pa1 = a1 / n, pb1 = b1 / n;
  const double pe = pa1 * pb1 + (1.0 - pa1) * (1.0 - pb1);
  if (pe == 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["edge_p"] = edge_p;
  j["edge_r"] = edge_r;
  j["edge_f1"] = edge_f1;
  j["recipe_p"] = recipe_p;
  j["recipe_r"] = recipe_r;
  j["recipe_f1"] = recipe_f1;
  j["avg_p"] = avg_p;
  j["avg_r"] = avg_r;
  j["avg_f1"] = avg_f1;
  j["n_recipes"] = n_recipes;
  j["n_gold_edges"] = n_gold_edges;
  j["n_pred_edges"] = n_pred_edges;
  return j.dump();
}

std::string MetricsReport::table_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "edge  P %6.2f  R %6.2f  F1 %6.2f | recipe  P %6.2f  R %6.2f  F1 %6.2f | "
                "avg  P %6.2f  R %6.2f  F1 %6.2f",
                100 * edge_p, 100 * edge_r, 100 * edge_f1, 100 * recipe_p, 100 * recipe_r,
                100 * recipe_f1, 100 * avg_p, 100 * avg_r, 100 * avg_f1);
  return std::string(buf);
}

}  // namespace recipeflow::metrics
