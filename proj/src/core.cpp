#include "recipeflow/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace recipeflow::core {

using nlohmann::json;
using nlohmann::ordered_json;

void WorkflowGraph::add_edge(int j, int i) {
  if (j < 0 || i >= n || j >= i) {
    throw ValidationError("edge must satisfy j < i with 0 <= j < i < n, got (" +
                          std::to_string(j) + ", " + std::to_string(i) + ") with n=" +
                          std::to_string(n));
  }
  if (!edges.insert({j, i}).second) {
    throw ValidationError("duplicate edge (" + std::to_string(j) + ", " + std::to_string(i) + ")");
  }
}

void WorkflowGraph::validate(const std::string& context) const {
  const std::string where = context.empty() ? "" : context + ": ";
  if (n < 0) throw ValidationError(where + "node count must be nonnegative");
  for (const auto& [j, i] : edges) {
    if (j < 0 || i >= n || j >= i) {
      throw ValidationError(where + "edge must satisfy j < i with 0 <= j < i < n, got (" +
                            std::to_string(j) + ", " + std::to_string(i) + ")");
    }
  }
}

void Recipe::validate() const {
  if (n() < 2) {
    throw ValidationError("recipe '" + id + "': recipe must have at least 2 steps");
  }
  size_t d = 0;
  bool d_seen = false;
  for (int k = 0; k < n(); ++k) {
    const CookingStep& s = steps[k];
    if (s.index != k) {
      throw ValidationError("recipe '" + id + "': step index mismatch at position " +
                            std::to_string(k));
    }
    if (s.text.empty()) {
      throw ValidationError("recipe '" + id + "': step " + std::to_string(k) +
                            " text must be non-empty");
    }
    for (const auto& v : s.images) {
      if (!d_seen) {
        d = v.size();
        d_seen = true;
      } else if (v.size() != d) {
        throw ValidationError("recipe '" + id + "': image feature dimension mismatch (" +
                              std::to_string(v.size()) + " vs " + std::to_string(d) + ")");
      }
    }
  }
  if (gold_workflow) {
    if (gold_workflow->n != n()) {
      throw ValidationError("recipe '" + id + "': workflow node count " +
                            std::to_string(gold_workflow->n) + " != step count " +
                            std::to_string(n()));
    }
    gold_workflow->validate("recipe '" + id + "'");
  }
}

void Dataset::validate() const {
  for (const Recipe& r : recipes) {
    r.validate();
    for (const CookingStep& s : r.steps) {
      for (const auto& v : s.images) {
        if (static_cast<int>(v.size()) != d_img) {
          throw ValidationError("recipe '" + r.id + "': image feature dimension mismatch (" +
                                std::to_string(v.size()) + " vs dataset d_img " +
                                std::to_string(d_img) + ")");
        }
      }
    }
  }
  for (const auto& [tok, id] : vocab) {
    if (tok == kPadToken && id != kPadId) throw ValidationError("vocab: <pad> must map to 0");
    if (tok == kUnkToken && id != kUnkId) throw ValidationError("vocab: <unk> must map to 1");
  }
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && !std::isalnum(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

namespace {

Recipe recipe_from_json(const json& j, int line_no) {
  Recipe r;
  if (!j.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected object");
  r.id = j.value("id", std::string());
  if (r.id.empty()) {
    throw ValidationError("line " + std::to_string(line_no) + ": recipe id must be non-empty");
  }
  if (!j.contains("steps") || !j["steps"].is_array()) {
    throw ValidationError("recipe '" + r.id + "': missing steps array");
  }
  int idx = 0;
  for (const auto& js : j["steps"]) {
    CookingStep s;
    s.index = idx++;
    s.text = tokenize(js.value("text", std::string()));
    if (js.contains("image_features") && !js["image_features"].is_null()) {
      for (const auto& jv : js["image_features"]) {
        s.images.push_back(jv.get<std::vector<double>>());
      }
    }
    r.steps.push_back(std::move(s));
  }
  if (j.contains("edges") && !j["edges"].is_null()) {
    WorkflowGraph g(r.n());
    for (const auto& je : j["edges"]) {
      if (!je.is_array() || je.size() != 2) {
        throw ValidationError("recipe '" + r.id + "': edge must be a [j, i] pair");
      }
      try {
        g.add_edge(je[0].get<int>(), je[1].get<int>());
      } catch (const ValidationError& e) {
        throw ValidationError("recipe '" + r.id + "': " + e.what());
      }
    }
    r.gold_workflow = std::move(g);
  }
  return r;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  Dataset ds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Recipe r = recipe_from_json(j, line_no);
    r.validate();
    ds.recipes.push_back(std::move(r));
  }
  for (const Recipe& r : ds.recipes) {
    for (const CookingStep& s : r.steps) {
      for (const auto& v : s.images) {
        if (ds.d_img == 0) {
          ds.d_img = static_cast<int>(v.size());
        }
      }
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path);
  for (const Recipe& r : dataset.recipes) {
    ordered_json j;
    j["id"] = r.id;
    j["steps"] = ordered_json::array();
    for (const CookingStep& s : r.steps) {
      ordered_json js;
      js["text"] = join_tokens(s.text);
      js["image_features"] = s.images;
      j["steps"].push_back(std::move(js));
    }
    if (r.gold_workflow) {
      auto edges = ordered_json::array();
      for (const auto& [a, b] : r.gold_workflow->edges) {
        edges.push_back({a, b});
      }
      j["edges"] = std::move(edges);
    } else {
      j["edges"] = nullptr;
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Vocab build_vocab(const std::vector<Recipe>& recipes, int min_count) {
  if (min_count < 1) throw ArgumentError("min_count must be >= 1");
  std::map<std::string, long long> counts;
  for (const Recipe& r : recipes) {
    for (const CookingStep& s : r.steps) {
      for (const std::string& t : s.text) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, c] : counts) {
    if (c >= min_count) kept.emplace_back(tok, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  v[kPadToken] = kPadId;
  v[kUnkToken] = kUnkId;
  int next = 2;
  for (const auto& [tok, c] : kept) v[tok] = next++;
  return v;
}

int vocab_size(const Vocab& vocab) {
  int m = 1;  // ids 0 and 1 always reserved
  for (const auto& [tok, id] : vocab) m = std::max(m, id);
  return m + 1;
}

std::vector<int> encode_tokens(const Vocab& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) {
    auto it = vocab.find(t);
    ids.push_back(it == vocab.end() ? kUnkId : it->second);
  }
  return ids;
}

}  // namespace recipeflow::core
