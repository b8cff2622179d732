#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "recipeflow/core.hpp"
#include "recipeflow/graphkit.hpp"
#include "recipeflow/tensor.hpp"

namespace recipeflow::baselines {

// Fixed 150-word English stopword list used by the hand-crafted features.
const std::set<std::string>& stopwords();

// Hand-crafted textual features for a step pair (j, i), in order:
//   0: count of shared content tokens (stopword-filtered, distinct)
//   1: TF-IDF cosine similarity (IDF over this recipe's steps, smoothed)
//   2: normalized step distance (i - j) / n
//   3: parallel-cue phrase indicator on step i
//   4: definite-anaphor indicator on step i
//   5: Jaccard similarity of the two token sets
std::vector<double> text_pair_features(const core::Recipe& r, int j, int i);

// (avg, max, min) cosine similarity over all cross pairs of the two steps'
// image vectors; all zeros when either step has no images.
std::array<double, 3> image_pair_similarities(const core::Recipe& r, int j, int i);
bool pair_has_missing_images(const core::Recipe& r, int j, int i);

enum class FeatureSet {
  text6,        // T1 hand-crafted textual features
  image4,       // I1 similarities plus a missing-image indicator
  multimodal9,  // M1: text6 followed by the three image similarities
};
int feature_dim(FeatureSet fs);
std::vector<double> pair_features(const core::Recipe& r, int j, int i, FeatureSet fs);

struct PairSample {
  const core::Recipe* recipe = nullptr;
  int j = 0, i = 0;
  int label = 0;
};

// All gold edges as positives plus an equal number of non-edge pairs sampled
// uniformly without replacement.
std::vector<PairSample> balanced_pair_samples(const std::vector<const core::Recipe*>& recipes,
                                              std::mt19937_64& rng);

// Full-batch logistic regression by gradient descent; returns weights with
// the bias appended. Throws TrainError when labels are single-class.
std::vector<double> train_linear_detector(const std::vector<std::vector<double>>& features,
                                          const std::vector<int>& labels, double l2, int epochs);
double logistic_score(const std::vector<double>& weights, const std::vector<double>& features);

// I2: two-layer feed-forward over the concatenated per-step averaged image
// feature vectors.
class FfPairDetector {
 public:
  FfPairDetector(int d_img, int hidden, uint64_t seed);

  tensor::Tensor forward(const core::Recipe& r, int j, int i) const;
  double score(const core::Recipe& r, int j, int i) const;

  tensor::ParameterStore& params() { return store_; }
  const tensor::ParameterStore& params() const { return store_; }
  int d_img() const { return d_img_; }
  int hidden() const { return hidden_; }

 private:
  int d_img_;
  int hidden_;
  tensor::ParameterStore store_;
};

// Adam on binary cross-entropy over the samples; returns per-epoch mean loss.
std::vector<double> train_ff_detector(FfPairDetector& det, const std::vector<PairSample>& samples,
                                      int epochs, double lr, uint64_t seed);

using Detector = std::function<double(const core::Recipe&, int, int)>;

// Fills an EdgeProbMatrix from the detector and builds the workflow graph.
graphkit::WorkflowGraph baseline_predict(const core::Recipe& r, const Detector& det, double theta);

}  // namespace recipeflow::baselines
