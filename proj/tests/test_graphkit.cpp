#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "recipeflow/graphkit.hpp"
#include "testutil.hpp"

using namespace recipeflow;
using namespace recipeflow::graphkit;

namespace {

WorkflowGraph graph(int n, std::initializer_list<std::pair<int, int>> edges) {
  WorkflowGraph g(n);
  for (auto [j, i] : edges) g.edges.insert({j, i});
  return g;
}

}  // namespace

TEST_CASE("has_path follows chains and respects direction") {
  auto g = graph(3, {{0, 1}, {1, 2}});
  CHECK(has_path(g, 0, 2));
  CHECK(has_path(g, 0, 1));
  CHECK_FALSE(has_path(graph(2, {{0, 1}}), 1, 0));
  CHECK_FALSE(has_path(g, 2, 2));
  CHECK_THROWS_AS(has_path(g, 0, 3), ArgumentError);
}

TEST_CASE("has_path agrees with the closure oracle on random DAGs") {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 50; ++it) {
    auto g = testutil::random_dag(rng, 8, 0.3);
    auto reach = testutil::closure_by_matrix_power(g);
    for (int a = 0; a < g.n; ++a) {
      for (int b = 0; b < g.n; ++b) {
        CHECK(has_path(g, a, b) == reach[a][b]);
      }
    }
  }
}

TEST_CASE("transitive_reduce removes implied edges") {
  CHECK(transitive_reduce(graph(3, {{0, 1}, {1, 2}, {0, 2}})).edges ==
        std::set<std::pair<int, int>>{{0, 1}, {1, 2}});
  auto chain = graph(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK(transitive_reduce(chain) == chain);
  auto vee = graph(3, {{0, 2}, {1, 2}});
  CHECK(transitive_reduce(vee) == vee);
}

TEST_CASE("transitive_reduce preserves closure and is idempotent") {
  std::mt19937_64 rng(17);
  for (int it = 0; it < 500; ++it) {
    const int n = 2 + static_cast<int>(rng() % 9);
    auto g = testutil::random_dag(rng, n, 0.35);
    auto reduced = transitive_reduce(g);
    CHECK(testutil::closure_by_matrix_power(reduced) == testutil::closure_by_matrix_power(g));
    CHECK(transitive_reduce(reduced) == reduced);
    for (const auto& e : reduced.edges) CHECK(g.edges.count(e) == 1);
  }
}

TEST_CASE("build_workflow thresholds strictly then prunes") {
  EdgeProbMatrix p(3);
  p.set(1, 0, 0.9);
  p.set(2, 0, 0.7);
  p.set(2, 1, 0.8);
  CHECK(build_workflow(p, 0.5).edges == std::set<std::pair<int, int>>{{0, 1}, {1, 2}});

  EdgeProbMatrix all_half(4);
  for (int i = 1; i < 4; ++i) {
    for (int j = 0; j < i; ++j) all_half.set(i, j, 0.5);
  }
  CHECK(build_workflow(all_half, 0.5).edges.empty());
  CHECK(build_workflow(p, 1.0).edges.empty());
  CHECK_THROWS_AS(build_workflow(p, 1.5), ArgumentError);
}

TEST_CASE("build_workflow never keeps sub-threshold edges and is monotone in theta") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const int n = 2 + static_cast<int>(rng() % 7);
    EdgeProbMatrix p(n);
    for (int i = 1; i < n; ++i) {
      for (int j = 0; j < i; ++j) p.set(i, j, u(rng));
    }
    const double lo = u(rng), hi = std::min(1.0, lo + u(rng) * (1.0 - lo));
    auto g_lo = build_workflow(p, lo);
    auto g_hi = build_workflow(p, hi);
    for (const auto& [j, i] : g_lo.edges) CHECK(p.at(i, j) > lo);
    // candidate sets shrink as theta rises; the reduction of a subset stays
    // inside the lower-theta candidate set's closure
    WorkflowGraph cand_lo(n), cand_hi(n);
    for (int i = 1; i < n; ++i) {
      for (int j = 0; j < i; ++j) {
        if (p.at(i, j) > lo) cand_lo.edges.insert({j, i});
        if (p.at(i, j) > hi) cand_hi.edges.insert({j, i});
      }
    }
    for (const auto& e : cand_hi.edges) CHECK(cand_lo.edges.count(e) == 1);
  }
}

TEST_CASE("EdgeProbMatrix validates domain and range") {
  EdgeProbMatrix p(3);
  CHECK_THROWS_AS(p.set(0, 0, 0.5), ArgumentError);
  CHECK_THROWS_AS(p.set(1, 1, 0.5), ArgumentError);
  CHECK_THROWS_AS(p.set(2, 1, 1.5), ArgumentError);
  p.set(2, 1, 1.0);
  CHECK(p.at(2, 1) == 1.0);
}

TEST_CASE("export_dot renders nodes, labels, and edges") {
  auto r = testutil::make_recipe("r", {"mix the flour well", "bake it"});
  auto g = graph(2, {{0, 1}});
  const std::string dot = export_dot(r, g);
  CHECK(dot.find("\"1\" -> \"2\"") != std::string::npos);
  CHECK(dot.find("1: mix the flour well") != std::string::npos);
  CHECK(testutil::DotChecker(dot).valid());

  auto iso = export_dot(testutil::make_recipe("r2", {"a b", "c d", "e f"}), WorkflowGraph(3));
  CHECK(testutil::DotChecker(iso).valid());
  CHECK(iso.find("->") == std::string::npos);

  CHECK_THROWS_AS(export_dot(r, WorkflowGraph(5)), ArgumentError);
}

TEST_CASE("export_dot handles a 13-step converging graph") {
  std::vector<std::string> texts;
  for (int k = 0; k < 13; ++k) texts.push_back("step number " + std::to_string(k + 1) + " text");
  auto r = testutil::make_recipe("big", texts);
  WorkflowGraph g(13);
  g.edges = {{0, 2}, {1, 2}, {2, 6}, {3, 5}, {4, 5}, {5, 6}, {6, 10}, {7, 9},
             {8, 9}, {9, 10}, {10, 11}, {11, 12}};
  const std::string dot = export_dot(r, g);
  CHECK(testutil::DotChecker(dot).valid());
  CHECK(dot.find("\"11\" -> \"12\"") != std::string::npos);
}
