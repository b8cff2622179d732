#include "recipeflow/graphkit.hpp"

#include <sstream>

namespace recipeflow::graphkit {

size_t EdgeProbMatrix::index(int i, int j) const {
  if (i < 0 || i >= n_ || j < 0 || j >= i) {
    throw ArgumentError("EdgeProbMatrix: index (" + std::to_string(i) + ", " +
                        std::to_string(j) + ") outside lower-triangular domain, n=" +
                        std::to_string(n_));
  }
  return static_cast<size_t>(i) * (i - 1) / 2 + j;
}

double EdgeProbMatrix::at(int i, int j) const { return probs_[index(i, j)]; }

void EdgeProbMatrix::set(int i, int j, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ArgumentError("EdgeProbMatrix: probability must be in [0,1], got " + std::to_string(p));
  }
  probs_[index(i, j)] = p;
}

namespace {

std::vector<std::vector<bool>> adjacency(const WorkflowGraph& g) {
  std::vector<std::vector<bool>> adj(g.n, std::vector<bool>(g.n, false));
  for (const auto& [j, i] : g.edges) adj[j][i] = true;
  return adj;
}

// Floyd–Warshall boolean closure; reach[a][b] true iff a path of length >= 1.
std::vector<std::vector<bool>> closure(const WorkflowGraph& g) {
  auto reach = adjacency(g);
  for (int k = 0; k < g.n; ++k) {
    for (int a = 0; a < g.n; ++a) {
      if (!reach[a][k]) continue;
      for (int b = 0; b < g.n; ++b) {
        if (reach[k][b]) reach[a][b] = true;
      }
    }
  }
  return reach;
}

}  // namespace

bool has_path(const WorkflowGraph& g, int src, int dst) {
  if (src < 0 || src >= g.n || dst < 0 || dst >= g.n) {
    throw ArgumentError("has_path: node out of range (src=" + std::to_string(src) +
                        ", dst=" + std::to_string(dst) + ", n=" + std::to_string(g.n) + ")");
  }
  // Edges only go forward, so a simple forward BFS suffices.
  std::vector<std::vector<int>> next(g.n);
  for (const auto& [j, i] : g.edges) next[j].push_back(i);
  std::vector<bool> seen(g.n, false);
  std::vector<int> stack{src};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : next[u]) {
      if (v == dst) return true;
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return false;
}

WorkflowGraph transitive_reduce(const WorkflowGraph& g) {
  g.validate("transitive_reduce");
  const auto adj = adjacency(g);
  const auto reach = closure(g);
  WorkflowGraph out(g.n);
  for (const auto& [j, i] : g.edges) {
    // Redundant iff some successor k of j (k != i) still reaches i; paths are
    // checked against the original graph, so removal order cannot matter.
    bool redundant = false;
    for (int k = 0; k < g.n && !redundant; ++k) {
      if (k != i && adj[j][k] && reach[k][i]) redundant = true;
    }
    if (!redundant) out.edges.insert({j, i});
  }
  return out;
}

WorkflowGraph build_workflow(const EdgeProbMatrix& p, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw ArgumentError("build_workflow: theta must be in [0,1], got " + std::to_string(theta));
  }
  WorkflowGraph candidates(p.n());
  for (int i = 1; i < p.n(); ++i) {
    for (int j = 0; j < i; ++j) {
      if (p.at(i, j) > theta) candidates.edges.insert({j, i});
    }
  }
  return transitive_reduce(candidates);
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string export_dot(const Recipe& r, const WorkflowGraph& g) {
  if (g.n != r.n()) {
    throw ArgumentError("export_dot: graph has " + std::to_string(g.n) + " nodes but recipe '" +
                        r.id + "' has " + std::to_string(r.n()) + " steps");
  }
  std::ostringstream os;
  os << "digraph workflow {\n";
  os << "  rankdir=TB;\n";
  for (int k = 0; k < g.n; ++k) {
    std::string label = std::to_string(k + 1) + ":";
    const auto& toks = r.steps[k].text;
    for (size_t t = 0; t < toks.size() && t < 6; ++t) label += " " + toks[t];
    os << "  \"" << (k + 1) << "\" [label=\"" << dot_escape(label) << "\"];\n";
  }
  for (const auto& [j, i] : g.edges) {
    os << "  \"" << (j + 1) << "\" -> \"" << (i + 1) << "\";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace recipeflow::graphkit
