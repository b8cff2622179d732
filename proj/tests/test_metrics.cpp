#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "recipeflow/metrics.hpp"
#include "testutil.hpp"

using namespace recipeflow;
using namespace recipeflow::metrics;

namespace {

WorkflowGraph graph(int n, std::initializer_list<std::pair<int, int>> edges) {
  WorkflowGraph g(n);
  for (auto [j, i] : edges) g.edges.insert({j, i});
  return g;
}

}  // namespace

TEST_CASE("f1 harmonic mean with the degenerate convention") {
  CHECK(f1(1, 1) == doctest::Approx(1.0));
  CHECK(f1(0, 0) == 0.0);
  CHECK(f1(0.5, 1.0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("perfect predictions score 1 everywhere") {
  auto g = graph(4, {{0, 1}, {1, 2}, {1, 3}});
  auto rep = evaluate({g, g}, {g, g});
  CHECK(rep.edge_p == 1.0);
  CHECK(rep.edge_r == 1.0);
  CHECK(rep.edge_f1 == 1.0);
  CHECK(rep.recipe_p == 1.0);
  CHECK(rep.recipe_r == 1.0);
  CHECK(rep.recipe_f1 == 1.0);
  CHECK(rep.avg_f1 == 1.0);
  CHECK(rep.n_gold_edges == 6);
  CHECK(rep.n_pred_edges == 6);
}

TEST_CASE("single recipe with partial overlap") {
  auto gold = graph(4, {{0, 1}, {1, 2}, {1, 3}});
  auto pred = graph(4, {{0, 1}, {0, 2}, {1, 3}});
  auto rep = evaluate({gold}, {pred});
  CHECK(rep.edge_p == doctest::Approx(2.0 / 3.0));
  CHECK(rep.edge_r == doctest::Approx(2.0 / 3.0));
  CHECK(rep.edge_f1 == doctest::Approx(2.0 / 3.0));
  CHECK(rep.recipe_p == doctest::Approx(2.0 / 3.0));
  CHECK(rep.recipe_r == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("edge vs recipe level diverge when recipe sizes differ") {
  // recipe A perfect with 2 edges; recipe B fully wrong (1 gold, 1 disjoint pred)
  auto gold_a = graph(3, {{0, 1}, {1, 2}});
  auto pred_a = gold_a;
  auto gold_b = graph(3, {{0, 1}});
  auto pred_b = graph(3, {{0, 2}});
  auto rep = evaluate({gold_a, gold_b}, {pred_a, pred_b});
  CHECK(rep.edge_p == doctest::Approx(2.0 / 3.0));
  CHECK(rep.edge_r == doctest::Approx(2.0 / 3.0));
  CHECK(rep.recipe_p == doctest::Approx(0.5));
  CHECK(rep.recipe_r == doctest::Approx(0.5));
}

TEST_CASE("empty-denominator convention") {
  auto empty = graph(3, {});
  auto some = graph(3, {{0, 1}});
  // empty prediction with empty gold counts as correct
  auto rep = evaluate({empty}, {empty});
  CHECK(rep.edge_p == 1.0);
  CHECK(rep.recipe_p == 1.0);
  CHECK(rep.recipe_r == 1.0);
  // empty prediction against non-empty gold scores zero precision credit
  auto rep2 = evaluate({some}, {empty});
  CHECK(rep2.recipe_p == 0.0);
  CHECK(rep2.recipe_r == 0.0);
}

TEST_CASE("swapping gold and pred swaps precision and recall") {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 50; ++it) {
    const int n = 3 + static_cast<int>(rng() % 6);
    std::vector<WorkflowGraph> a, b;
    for (int k = 0; k < 4; ++k) {
      a.push_back(testutil::random_dag(rng, n, 0.35));
      b.push_back(testutil::random_dag(rng, n, 0.35));
    }
    auto ab = evaluate(a, b);
    auto ba = evaluate(b, a);
    CHECK(ab.edge_p == doctest::Approx(ba.edge_r));
    CHECK(ab.edge_r == doctest::Approx(ba.edge_p));
    CHECK(ab.recipe_p == doctest::Approx(ba.recipe_r));
    CHECK(ab.recipe_r == doctest::Approx(ba.recipe_p));
    CHECK(ab.edge_f1 == doctest::Approx(ba.edge_f1));
  }
}

TEST_CASE("metrics are invariant under recipe permutation") {
  std::mt19937_64 rng(9);
  std::vector<WorkflowGraph> gold, pred;
  for (int k = 0; k < 6; ++k) {
    gold.push_back(testutil::random_dag(rng, 6, 0.3));
    pred.push_back(testutil::random_dag(rng, 6, 0.3));
  }
  auto rep = evaluate(gold, pred);
  std::vector<int> perm{5, 3, 0, 1, 4, 2};
  std::vector<WorkflowGraph> gold_p, pred_p;
  for (int k : perm) {
    gold_p.push_back(gold[k]);
    pred_p.push_back(pred[k]);
  }
  auto rep_p = evaluate(gold_p, pred_p);
  CHECK(rep.edge_p == doctest::Approx(rep_p.edge_p));
  CHECK(rep.recipe_p == doctest::Approx(rep_p.recipe_p));
  CHECK(rep.recipe_r == doctest::Approx(rep_p.recipe_r));
}

TEST_CASE("evaluate matches the brute-force oracle bit-for-bit on 200 random cases") {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 200; ++it) {
    const int N = 1 + static_cast<int>(rng() % 10);
    std::vector<WorkflowGraph> gold, pred;
    for (int k = 0; k < N; ++k) {
      const int n = 2 + static_cast<int>(rng() % 11);
      gold.push_back(testutil::random_dag(rng, n, 0.3));
      pred.push_back(testutil::random_dag(rng, n, 0.3));
    }
    auto a = evaluate(gold, pred);
    auto b = testutil::brute_force_evaluate(gold, pred);
    CHECK(a.edge_p == b.edge_p);
    CHECK(a.edge_r == b.edge_r);
    CHECK(a.edge_f1 == b.edge_f1);
    CHECK(a.recipe_p == b.recipe_p);
    CHECK(a.recipe_r == b.recipe_r);
    CHECK(a.recipe_f1 == b.recipe_f1);
    CHECK(a.avg_p == b.avg_p);
    CHECK(a.avg_r == b.avg_r);
    CHECK(a.avg_f1 == b.avg_f1);
    CHECK(a.avg_p >= 0.0);
    CHECK(a.avg_p <= 1.0);
    CHECK(a.avg_r <= 1.0);
    CHECK(a.avg_f1 <= 1.0);
  }
}

TEST_CASE("evaluate rejects mismatched inputs") {
  auto g = graph(3, {{0, 1}});
  CHECK_THROWS_AS(evaluate({g}, {}), ArgumentError);
  CHECK_THROWS_AS(evaluate({g}, {graph(4, {})}), ArgumentError);
}

TEST_CASE("cohens_kappa hand-worked cases") {
  CHECK(cohens_kappa({1, 0, 1, 0}, {1, 0, 1, 0}) == doctest::Approx(1.0));
  CHECK(cohens_kappa({1, 1, 0, 0}, {1, 0, 0, 0}) == doctest::Approx(0.5));
  CHECK(cohens_kappa({1, 0}, {0, 1}) == doctest::Approx(-1.0));
  // constant identical raters: expected agreement is 1
  CHECK(cohens_kappa({1, 1, 1}, {1, 1, 1}) == 1.0);
  CHECK_THROWS_AS(cohens_kappa({1}, {1, 0}), ArgumentError);
}

TEST_CASE("report JSON is flat and stable") {
  auto g = graph(3, {{0, 1}});
  auto rep = evaluate({g}, {g});
  const std::string j = rep.to_json();
  CHECK(j.find("\"edge_p\":1.0") != std::string::npos);
  CHECK(j.find("\"n_recipes\":1") != std::string::npos);
  CHECK(rep.to_json() == j);
}
