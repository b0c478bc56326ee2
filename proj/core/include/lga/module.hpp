#pragma once

#include <optional>
#include <set>
#include <vector>

#include "lga/graph.hpp"
#include "lga/tensor.hpp"

namespace lga {

enum class LayerActivation { ReluExceptLast, Identity };

struct LgaParams {
  EdgeKernels edge_kernels;
  std::optional<GroupedLinear> input_reducer;  // C_in -> C_lga
  std::vector<GroupedLinear> layer_transforms; // each C_lga -> C_lga
  LayerActivation activation = LayerActivation::ReluExceptLast;

  int layers() const { return static_cast<int>(layer_transforms.size()); }
  int lga_channels() const {
    return layer_transforms.empty() ? 0 : layer_transforms[0].out_channels;
  }
  int in_channels() const {
    return input_reducer ? input_reducer->in_channels
                         : edge_kernels.channels();
  }
  long long param_count() const;

  static LgaParams random(int c_in, int c_lga, int layers, int groups,
                          std::mt19937_64& rng, double scale = 0.5,
                          bool with_reducer = true);
  /// Strictly positive weights; used by the receptive-field probe so every
  /// reachable node sees a strictly positive perturbation.
  static LgaParams positive(int c_in, int c_lga, int layers, int groups,
                            std::mt19937_64& rng, bool with_reducer = true);
};

struct LgaOutput {
  FeatureMap f_out;  // H x W x C_lga
  FeatureMap f_cat;  // H x W x (C_in + C_lga)

  // retained for backward (empty when keep_intermediates is false)
  bool has_intermediates = false;
  LocalGraph graph;
  EdgeMaps edge_maps;
  NodeMatrix x0;                   // reduced input, edge-kernel input
  std::vector<NodeMatrix> xs;      // X_1 .. X_L (post-activation)
  std::vector<NodeMatrix> msgs;    // M_i per layer
  std::vector<NodeMatrix> preact;  // transform_i(M_i) before activation
};

LgaOutput lga_forward(const FeatureMap& f_in, const LgaParams& p, double eps,
                      bool keep_intermediates = true);

struct LgaGrads {
  FeatureMap grad_f_in;
  EdgeKernels grad_edge_kernels;
  std::optional<GroupedLinear> grad_reducer;
  std::vector<GroupedLinear> grad_transforms;
};

/// Reverse-mode gradients through the whole module. grad_f_cat has
/// C_in + C_lga channels; pass zeros on the F^in slice to differentiate a
/// function of F^out alone.
LgaGrads lga_backward(const FeatureMap& f_in, const LgaParams& p,
                      const LgaOutput& out, const FeatureMap& grad_f_cat);

/// Convenience: upstream gradient on F^out only.
LgaGrads lga_backward_fout(const FeatureMap& f_in, const LgaParams& p,
                           const LgaOutput& out, const FeatureMap& grad_f_out);

/// Nodes whose F^out changes when f_in at source_node is perturbed. With the
/// structural connectivity this is the Chebyshev ball of radius L around the
/// source (params from LgaParams::positive make every member change strictly).
std::set<int> receptive_field_probe(const LgaParams& p, int height, int width,
                                    int source_node, double eps = 1e-6,
                                    uint64_t seed = 7);

}  // namespace lga
