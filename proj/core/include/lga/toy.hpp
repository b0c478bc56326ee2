#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lga/loss.hpp"
#include "lga/module.hpp"

namespace lga {

/// Segmentation sample for the distant-cue task. Classes: 0 background,
/// 1 and 2 object variants. Object interiors of both variants look identical;
/// the variant is encoded only on a thin ring of cells at Chebyshev distance
/// cue_radius from the object center (cue_radius 0 paints the whole object,
/// making the task locally solvable).
struct SyntheticSample {
  FeatureMap image;        // H x W x 3, values in [0,1]
  std::vector<int> labels; // H x W class ids
  uint64_t seed = 0;
};

std::vector<SyntheticSample> generate_dataset(int count, int height, int width,
                                              uint64_t seed,
                                              int cue_radius = 8);

void save_dataset(const std::string& dir,
                  const std::vector<SyntheticSample>& data);
std::vector<SyntheticSample> load_dataset(const std::string& dir);

// Space-to-depth / depth-to-space by factor 2; the strided encoder/decoder
// blocks are these permutations around grouped 1x1 convolutions.
FeatureMap space_to_depth2(const FeatureMap& x);
FeatureMap depth_to_space2(const FeatureMap& x);

struct ToyModelConfig {
  int height = 32;
  int width = 32;
  int classes = 3;
  int enc1_channels = 8;
  int enc2_channels = 16;
  int lga_channels = 8;
  int dec_channels = 16;
  int lga_layers = 4;
  int groups = 1;
  bool use_lga = true;  // false (or lga_layers == 0) is the no-LGA control
  double lga_init_scale = 0.35;  // uniform(+-scale) init of the graph block
  double eps = 1e-6;

  bool lga_enabled() const { return use_lga && lga_layers > 0; }
  int cat_channels() const {
    return enc2_channels + (lga_enabled() ? lga_channels : 0);
  }
};

/// Encoder (two stride-2 blocks) + optional LGA + decoder (two upsample
/// blocks) producing per-pixel class logits.
struct ToyModel {
  ToyModelConfig cfg;
  GroupedLinear enc1;  // 4*3 -> enc1_channels
  GroupedLinear enc2;  // 4*enc1 -> enc2_channels
  std::optional<LgaParams> lga;
  GroupedLinear dec1;  // cat -> 4*dec_channels
  GroupedLinear dec2;  // dec -> 4*classes

  static ToyModel random(const ToyModelConfig& cfg, uint64_t seed);
  std::vector<std::vector<double>*> param_tensors();
  std::vector<const std::vector<double>*> param_tensors() const;
};

struct ToyForward {
  FeatureMap logits;  // H x W x classes
  // intermediates for backward
  FeatureMap enc1_in, enc1_pre, enc1_out;
  FeatureMap enc2_in, enc2_pre, enc2_out;
  std::optional<LgaOutput> lga_out;
  FeatureMap cat;
  FeatureMap dec1_pre, dec1_out;
};

ToyForward toy_forward(const ToyModel& model, const FeatureMap& image,
                       bool keep_intermediates = true);

struct ToyLosses {
  double task_loss = 0.0;
  double contrastive_loss = 0.0;
};

/// Cross-entropy + lambda * contrastive backward pass; gradients are laid out
/// to match ToyModel::param_tensors().
ToyLosses toy_backward(const ToyModel& model, const ToyForward& fwd,
                       const std::vector<int>& labels, double lambda,
                       bool divergence_loss, int pairs_per_step,
                       uint64_t pair_seed,
                       std::vector<std::vector<double>>& grads,
                       double contrastive_delta = 1e-2,
                       DivergenceKind divergence_kind = DivergenceKind::Mse);

struct AdamOptimizer {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<std::vector<double>> m, v;

  void step(std::vector<std::vector<double>*>& params,
            const std::vector<std::vector<double>>& grads);
};

struct TrainConfig {
  int epochs = 40;
  double lr = 1e-4;
  int lr_decay_epoch = 30;     // step decay: lr -> lr * lr_decay_factor
  double lr_decay_factor = 0.1;
  double lambda = 1.0;         // contrastive weight
  // Linearly anneal lambda to zero over this many epochs (0 keeps it
  // constant); the auxiliary term mainly helps early latent organization.
  int lambda_anneal_epochs = 0;
  bool divergence_loss = true;
  DivergenceKind divergence_kind = DivergenceKind::Mse;
  int pairs_per_step = 64;
  // Stabilizer inside the contrastive term; larger than the loss-side default
  // so the dissimilar term's 1/V gradient stays bounded under batch-of-one.
  double contrastive_delta = 1e-2;
  uint64_t seed = 1;
  std::string checkpoint_dir;  // empty disables per-epoch checkpoints
};

struct EpochMetrics {
  int epoch = 0;
  double task_loss = 0.0;
  double contrastive_loss = 0.0;
  double pixel_accuracy = 0.0;
  double miou = 0.0;
};

struct EvalMetrics {
  double pixel_accuracy = 0.0;
  double miou = 0.0;
};

EvalMetrics evaluate(const ToyModel& model,
                     const std::vector<SyntheticSample>& data);

std::vector<EpochMetrics> train(ToyModel& model,
                                const std::vector<SyntheticSample>& train_data,
                                const std::vector<SyntheticSample>& eval_data,
                                const TrainConfig& cfg);

/// Mean-over-classes intersection/union; classes absent from both prediction
/// and ground truth are skipped.
double mean_iou(const std::vector<int>& predicted, const std::vector<int>& truth,
                int classes);

struct AblationRow {
  std::string value;
  double miou = 0.0;
};

/// axis in {layers, divergence_loss, groups}; one seeded run per value.
std::vector<AblationRow> ablate(const std::string& axis,
                                const std::vector<std::string>& values,
                                const ToyModelConfig& model_cfg,
                                const TrainConfig& train_cfg,
                                const std::vector<SyntheticSample>& train_data,
                                const std::vector<SyntheticSample>& eval_data);

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& history);

}  // namespace lga
