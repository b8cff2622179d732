#include "recipeflow/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "recipeflow/nn.hpp"

namespace recipeflow::baselines {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",        "about",      "above",   "after",      "again",    "against", "all",
      "am",       "an",         "and",     "any",        "are",      "as",      "at",
      "be",       "because",    "been",    "before",     "being",    "below",   "between",
      "both",     "but",        "by",      "can",        "cannot",   "could",   "did",
      "do",       "does",       "doing",   "down",       "during",   "each",    "either",
      "few",      "for",        "from",    "further",    "had",      "has",     "have",
      "having",   "he",         "her",     "here",       "hers",     "herself", "him",
      "himself",  "his",        "how",     "i",          "if",       "in",      "into",
      "is",       "it",         "its",     "itself",     "just",     "let",     "me",
      "more",     "most",       "must",    "my",         "myself",   "no",      "nor",
      "not",      "now",        "of",      "off",        "on",       "once",    "only",
      "or",       "other",      "ought",   "our",        "ours",     "ourselves", "out",
      "over",     "own",        "same",    "shall",      "she",      "should",  "so",
      "some",     "such",       "than",    "that",       "the",      "their",   "theirs",
      "them",     "themselves", "then",    "there",      "these",    "they",    "this",
      "those",    "through",    "to",      "too",        "under",    "until",   "up",
      "upon",     "very",       "was",     "we",         "were",     "what",    "when",
      "where",    "which",      "while",   "who",        "whom",     "why",     "will",
      "with",     "within",     "without", "would",      "you",      "your",    "yours",
      "yourself", "yourselves", "also",    "although",   "among",    "anything", "around",
      "besides",  "beyond",     "despite", "else",       "every",    "however", "onto",
      "per",      "since",      "via"};
  return words;
}

namespace {

const std::vector<std::vector<std::string>>& parallel_cues() {
  static const std::vector<std::vector<std::string>> cues = {
      {"another"}, {"separate"}, {"meanwhile"}, {"set", "aside"}, {"in", "a", "second"}};
  return cues;
}

const std::vector<std::vector<std::string>>& anaphor_cues() {
  static const std::vector<std::vector<std::string>> cues = {
      {"the", "mixture"}, {"the", "batter"}, {"the", "dough"}, {"it"}, {"them"}};
  return cues;
}

bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (size_t s = 0; s + phrase.size() <= tokens.size(); ++s) {
    bool ok = true;
    for (size_t k = 0; k < phrase.size(); ++k) {
      if (tokens[s + k] != phrase[k]) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

bool matches_any(const std::vector<std::string>& tokens,
                 const std::vector<std::vector<std::string>>& cues) {
  for (const auto& c : cues) {
    if (contains_phrase(tokens, c)) return true;
  }
  return false;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void check_pair(const core::Recipe& r, int j, int i) {
  if (!(0 <= j && j < i && i < r.n())) {
    throw ArgumentError("pair features: need 0 <= j < i < n, got (" + std::to_string(j) + ", " +
                        std::to_string(i) + ") with n=" + std::to_string(r.n()));
  }
}

}  // namespace

std::vector<double> text_pair_features(const core::Recipe& r, int j, int i) {
  check_pair(r, j, i);
  const auto& tj = r.steps[j].text;
  const auto& ti = r.steps[i].text;
  const std::set<std::string> sj(tj.begin(), tj.end());
  const std::set<std::string> si(ti.begin(), ti.end());

  double shared_content = 0;
  for (const auto& t : sj) {
    if (si.count(t) && !stopwords().count(t)) ++shared_content;
  }

  // Smoothed IDF over this recipe's steps keeps identical texts at cosine 1.
  std::map<std::string, int> df;
  for (const auto& step : r.steps) {
    std::set<std::string> uniq(step.text.begin(), step.text.end());
    for (const auto& t : uniq) ++df[t];
  }
  const double n_docs = static_cast<double>(r.n());
  auto tfidf = [&](const std::vector<std::string>& toks) {
    std::map<std::string, double> v;
    for (const auto& t : toks) v[t] += 1.0;
    for (auto& [t, w] : v) {
      w *= std::log((1.0 + n_docs) / (1.0 + df[t])) + 1.0;
    }
    return v;
  };
  const auto vj = tfidf(tj);
  const auto vi = tfidf(ti);
  double dot = 0, nj = 0, ni = 0;
  for (const auto& [t, w] : vj) {
    nj += w * w;
    auto it = vi.find(t);
    if (it != vi.end()) dot += w * it->second;
  }
  for (const auto& [t, w] : vi) ni += w * w;
  const double tfidf_cos = (nj == 0 || ni == 0) ? 0.0 : dot / (std::sqrt(nj) * std::sqrt(ni));

  const double dist = static_cast<double>(i - j) / static_cast<double>(r.n());
  const double parallel_cue = matches_any(ti, parallel_cues()) ? 1.0 : 0.0;
  const double anaphor = matches_any(ti, anaphor_cues()) ? 1.0 : 0.0;

  std::set<std::string> uni = sj;
  uni.insert(si.begin(), si.end());
  double inter = 0;
  for (const auto& t : sj) {
    if (si.count(t)) ++inter;
  }
  const double jaccard = uni.empty() ? 0.0 : inter / static_cast<double>(uni.size());

  return {shared_content, tfidf_cos, dist, parallel_cue, anaphor, jaccard};
}

std::array<double, 3> image_pair_similarities(const core::Recipe& r, int j, int i) {
  check_pair(r, j, i);
  const auto& a = r.steps[j].images;
  const auto& b = r.steps[i].images;
  if (a.empty() || b.empty()) return {0.0, 0.0, 0.0};
  double sum = 0, mx = -2, mn = 2;
  for (const auto& va : a) {
    for (const auto& vb : b) {
      const double c = cosine(va, vb);
      sum += c;
      mx = std::max(mx, c);
      mn = std::min(mn, c);
    }
  }
  const double avg = sum / static_cast<double>(a.size() * b.size());
  return {avg, mx, mn};
}

bool pair_has_missing_images(const core::Recipe& r, int j, int i) {
  check_pair(r, j, i);
  return r.steps[j].images.empty() || r.steps[i].images.empty();
}

int feature_dim(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::text6: return 6;
    case FeatureSet::image4: return 4;
    case FeatureSet::multimodal9: return 9;
  }
  throw ConfigError("unknown feature set");
}

std::vector<double> pair_features(const core::Recipe& r, int j, int i, FeatureSet fs) {
  switch (fs) {
    case FeatureSet::text6:
      return text_pair_features(r, j, i);
    case FeatureSet::image4: {
      const auto s = image_pair_similarities(r, j, i);
      return {s[0], s[1], s[2], pair_has_missing_images(r, j, i) ? 1.0 : 0.0};
    }
    case FeatureSet::multimodal9: {
      auto f = text_pair_features(r, j, i);
      const auto s = image_pair_similarities(r, j, i);
      f.insert(f.end(), s.begin(), s.end());
      return f;
    }
  }
  throw ConfigError("unknown feature set");
}

std::vector<PairSample> balanced_pair_samples(const std::vector<const core::Recipe*>& recipes,
                                              std::mt19937_64& rng) {
  std::vector<PairSample> pos, neg_pool;
  for (const core::Recipe* r : recipes) {
    if (!r->gold_workflow) throw DataError("recipe '" + r->id + "' has no gold workflow");
    for (int i = 1; i < r->n(); ++i) {
      for (int j = 0; j < i; ++j) {
        if (r->gold_workflow->has_edge(j, i)) {
          pos.push_back({r, j, i, 1});
        } else {
          neg_pool.push_back({r, j, i, 0});
        }
      }
    }
  }
  // 1:1 negative sampling without replacement
  for (int i = static_cast<int>(neg_pool.size()) - 1; i > 0; --i) {
    std::swap(neg_pool[i], neg_pool[tensor::uniform_int(rng, 0, i)]);
  }
  const size_t n_neg = std::min(pos.size(), neg_pool.size());
  std::vector<PairSample> out = pos;
  out.insert(out.end(), neg_pool.begin(), neg_pool.begin() + n_neg);
  return out;
}

std::vector<double> train_linear_detector(const std::vector<std::vector<double>>& features,
                                          const std::vector<int>& labels, double l2, int epochs) {
  if (features.empty() || features.size() != labels.size()) {
    throw ArgumentError("train_linear_detector: features and labels must be non-empty and match");
  }
  bool any_pos = false, any_neg = false;
  for (int y : labels) (y != 0 ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg) {
    throw TrainError("train_linear_detector: training data contains a single class");
  }
  const size_t dim = features[0].size();
  const size_t n = features.size();
  std::vector<double> w(dim + 1, 0.0);  // bias last
  const double lr = 0.5;
  std::vector<double> grad(dim + 1);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (size_t s = 0; s < n; ++s) {
      double z = w[dim];
      for (size_t k = 0; k < dim; ++k) z += w[k] * features[s][k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - static_cast<double>(labels[s]);
      for (size_t k = 0; k < dim; ++k) grad[k] += err * features[s][k];
      grad[dim] += err;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (size_t k = 0; k < dim; ++k) {
      w[k] -= lr * (grad[k] * inv + l2 * w[k]);
    }
    w[dim] -= lr * grad[dim] * inv;  // bias not regularized
  }
  return w;
}

double logistic_score(const std::vector<double>& weights, const std::vector<double>& features) {
  if (weights.size() != features.size() + 1) {
    throw ArgumentError("logistic_score: weight/feature dimension mismatch");
  }
  double z = weights.back();
  for (size_t k = 0; k < features.size(); ++k) z += weights[k] * features[k];
  return 1.0 / (1.0 + std::exp(-z));
}

FfPairDetector::FfPairDetector(int d_img, int hidden, uint64_t seed)
    : d_img_(d_img), hidden_(hidden) {
  if (d_img <= 0 || hidden <= 0) throw ConfigError("FfPairDetector: dims must be positive");
  std::mt19937_64 rng(seed);
  store_.create("ffpair.w1", {2 * d_img, hidden}, rng);
  store_.create_zeros("ffpair.b1", {1, hidden});
  store_.create("ffpair.w2", {hidden, 1}, rng);
  store_.create_zeros("ffpair.b2", {1, 1});
}

tensor::Tensor FfPairDetector::forward(const core::Recipe& r, int j, int i) const {
  check_pair(r, j, i);
  std::vector<double> x(2 * static_cast<size_t>(d_img_), 0.0);
  auto fill_mean = [&](const core::CookingStep& s, size_t off) {
    if (s.images.empty()) return;
    for (const auto& img : s.images) {
      if (static_cast<int>(img.size()) != d_img_) {
        throw ShapeError("FfPairDetector: image feature dim mismatch");
      }
      for (int k = 0; k < d_img_; ++k) x[off + k] += img[k];
    }
    const double inv = 1.0 / static_cast<double>(s.images.size());
    for (int k = 0; k < d_img_; ++k) x[off + k] *= inv;
  };
  fill_mean(r.steps[j], 0);
  fill_mean(r.steps[i], static_cast<size_t>(d_img_));
  tensor::Tensor in = tensor::Tensor::row(std::move(x));
  tensor::Tensor h =
      tensor::relu(tensor::linear(in, store_.get("ffpair.w1"), store_.get("ffpair.b1")));
  return tensor::sigmoid(tensor::linear(h, store_.get("ffpair.w2"), store_.get("ffpair.b2")));
}

double FfPairDetector::score(const core::Recipe& r, int j, int i) const {
  return forward(r, j, i).item();
}

std::vector<double> train_ff_detector(FfPairDetector& det, const std::vector<PairSample>& samples,
                                      int epochs, double lr, uint64_t seed) {
  if (samples.empty()) throw TrainError("train_ff_detector: no samples");
  std::mt19937_64 rng(seed);
  tensor::Adam adam(lr);
  std::vector<int> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<double> losses;
  const int batch = 32;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[tensor::uniform_int(rng, 0, i)]);
    }
    double loss_sum = 0.0;
    int pending = 0;
    auto flush = [&] {
      if (pending == 0) return;
      const double inv = 1.0 / static_cast<double>(pending);
      for (auto& p : det.params().all()) {
        if (!p.tensor.has_grad()) continue;
        for (double& g : p.tensor.grad()) g *= inv;
      }
      adam.step(det.params());
      det.params().zero_grad();
      pending = 0;
    };
    for (int idx : order) {
      const PairSample& s = samples[idx];
      tensor::Tape tape;
      {
        tensor::Tape::Scope scope(tape);
        tensor::Tensor p = det.forward(*s.recipe, s.j, s.i);
        tensor::Tensor pc = tensor::clamp(p, 1e-7, 1.0 - 1e-7);
        tensor::Tensor l = s.label
                               ? tensor::scale(tensor::log_t(pc), -1.0)
                               : tensor::scale(
                                     tensor::log_t(tensor::sub(tensor::Tensor::full({1, 1}, 1.0),
                                                               pc)),
                                     -1.0);
        tape.backward(l);
        loss_sum += l.item();
      }
      if (++pending >= batch) flush();
    }
    flush();
    losses.push_back(loss_sum / static_cast<double>(samples.size()));
  }
  return losses;
}

graphkit::WorkflowGraph baseline_predict(const core::Recipe& r, const Detector& det,
                                         double theta) {
  graphkit::EdgeProbMatrix m(r.n());
  for (int i = 1; i < r.n(); ++i) {
    for (int j = 0; j < i; ++j) m.set(i, j, det(r, j, i));
  }
  return graphkit::build_workflow(m, theta);
}

}  // namespace recipeflow::baselines
