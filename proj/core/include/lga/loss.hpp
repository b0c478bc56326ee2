#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lga/tensor.hpp"

namespace lga {

enum class DivergenceKind { Mse, Kl };

/// MSE: mean of squared differences. KL: Kullback-Leibler divergence of the
/// softmax-normalized vectors.
double node_divergence(std::span<const double> a, std::span<const double> b,
                       DivergenceKind kind);

/// Accumulates upstream * d(divergence)/d(a or b) into grad_a / grad_b.
void node_divergence_backward(std::span<const double> a,
                              std::span<const double> b, DivergenceKind kind,
                              double upstream, std::span<double> grad_a,
                              std::span<double> grad_b);

/// Single-scale SSIM over a whole patch (no sliding window); values are
/// expected in [0,1], dynamic range 1, K1=0.01, K2=0.03.
double ssim(std::span<const double> patch_a, std::span<const double> patch_b,
            double k1 = 0.01, double k2 = 0.03, double dynamic_range = 1.0);

struct PatchSimilarity {
  enum class Mode { ClassMajority, SsimThreshold };
  Mode mode = Mode::ClassMajority;
  double tau = 0.8;
  std::vector<int> labels;                  // class mode, one per node
  std::vector<std::vector<double>> patches; // ssim mode, one per node

  int node_count() const {
    return static_cast<int>(mode == Mode::ClassMajority ? labels.size()
                                                        : patches.size());
  }
  bool similar(int i, int j) const;
};

/// Class mode: each node owns one of H x W equal patches of the label map and
/// takes the majority class (ties go to the smallest class id).
PatchSimilarity build_similarity_classes(const std::vector<int>& gt, int gt_h,
                                         int gt_w, int height, int width);

/// SSIM mode: each node stores its patch; C(i,j) = [ssim > tau].
PatchSimilarity build_similarity_ssim(const std::vector<double>& gt, int gt_h,
                                      int gt_w, int height, int width,
                                      double tau);

std::string similarity_to_json(const PatchSimilarity& sim,
                               bool include_pairs = false);

struct PairBatch {
  std::vector<std::pair<int, int>> pairs;
  uint64_t seed = 0;
};

/// K distinct pairs (i != j), uniform, stratified to hold at least 25% similar
/// and 25% dissimilar pairs whenever both kinds exist.
PairBatch sample_pairs(const PatchSimilarity& sim, int count, uint64_t seed);

struct ContrastiveResult {
  double loss = 0.0;
  FeatureMap grad_f_out;  // gradient flows into F^out only; U is a constant
};

/// Pair term: C * log(V^2/(U+delta) + 1) + (1-C) * log((U+delta)/(V^2+delta) + 1),
/// averaged over the batch. V from f_out, U from f_in (treated as constant).
ContrastiveResult lga_contrastive_loss(const FeatureMap& f_in,
                                       const FeatureMap& f_out,
                                       const PatchSimilarity& sim,
                                       const PairBatch& pairs,
                                       DivergenceKind kind,
                                       double delta = 1e-8);

/// Closed-form single-pair contribution, exposed for the loss-shape checks.
double contrastive_pair_term(bool similar, double u, double v,
                             double delta = 1e-8);

}  // namespace lga
