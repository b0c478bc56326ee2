#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lga {

// Global multiply-accumulate counter. Off by default; the cost-model tests
// switch it on to compare analytic counts against what the kernels actually do.
namespace instr {
inline thread_local long long mac_count = 0;
inline thread_local bool enabled = false;

inline void add_macs(long long n) {
  if (enabled) mac_count += n;
}
inline void reset() { mac_count = 0; }
}  // namespace instr

/// Dense H x W x C feature map, row-major node order (node n = y*W + x),
/// channels contiguous per node.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("FeatureMap: dimensions must be positive");
    values.assign(static_cast<size_t>(h) * w * c, fill);
  }

  int nodes() const { return height * width; }
  size_t size() const { return values.size(); }

  double& at(int y, int x, int c) {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  std::span<double> node(int n) {
    return {values.data() + static_cast<size_t>(n) * channels,
            static_cast<size_t>(channels)};
  }
  std::span<const double> node(int n) const {
    return {values.data() + static_cast<size_t>(n) * channels,
            static_cast<size_t>(channels)};
  }

  bool same_shape(const FeatureMap& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const;
};

/// N x C matrix of node feature vectors (N = H*W of the originating map).
struct NodeMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  NodeMatrix() = default;
  NodeMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c) {
    values.assign(static_cast<size_t>(r) * c, fill);
  }

  std::span<double> row(int r) {
    return {values.data() + static_cast<size_t>(r) * cols,
            static_cast<size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {values.data() + static_cast<size_t>(r) * cols,
            static_cast<size_t>(cols)};
  }
};

/// Per-node grouped linear map (a 1x1 convolution). Weights are stored per
/// group as a (C_out/G) x (C_in/G) row-major block; bias is per output channel
/// and empty when disabled.
struct GroupedLinear {
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  GroupedLinear() = default;
  GroupedLinear(int c_in, int c_out, int g, bool with_bias = false);

  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }
  long long param_count() const {
    return static_cast<long long>(in_channels) * out_channels / groups +
           static_cast<long long>(bias.size());
  }

  double& w(int g, int o, int i) {
    return weights[(static_cast<size_t>(g) * out_per_group() + o) *
                       in_per_group() +
                   i];
  }
  double w(int g, int o, int i) const {
    return weights[(static_cast<size_t>(g) * out_per_group() + o) *
                       in_per_group() +
                   i];
  }

  static GroupedLinear identity(int c);
  static GroupedLinear random(int c_in, int c_out, int g, std::mt19937_64& rng,
                              double scale = 0.5, bool with_bias = false);

  /// Apply to a single node vector; out must have out_channels entries.
  void apply(std::span<const double> in, std::span<double> out) const;
};

FeatureMap conv1x1_grouped(const FeatureMap& x, const GroupedLinear& w);
NodeMatrix conv1x1_grouped(const NodeMatrix& x, const GroupedLinear& w);

struct Conv1x1Grads {
  FeatureMap grad_x;
  GroupedLinear grad_w;  // same shape as w, values are gradients
};
struct Conv1x1GradsNodes {
  NodeMatrix grad_x;
  GroupedLinear grad_w;
};

/// Gradients of sum(grad_out .* conv1x1_grouped(x, w)) w.r.t. x and w.
Conv1x1Grads conv1x1_grouped_backward(const FeatureMap& x,
                                      const GroupedLinear& w,
                                      const FeatureMap& grad_out);
Conv1x1GradsNodes conv1x1_grouped_backward(const NodeMatrix& x,
                                           const GroupedLinear& w,
                                           const NodeMatrix& grad_out);

NodeMatrix flatten_nodes(const FeatureMap& x);
FeatureMap unflatten_nodes(const NodeMatrix& m, int height, int width);

/// Concatenate along channels; shapes must agree spatially.
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Binary container: "LGAF" magic, u32 H, u32 W, u32 C, u8 dtype
// (0 = f32, 1 = f64), little-endian row-major payload.
enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

void write_feature_map(const std::string& path, const FeatureMap& fm,
                       Dtype dtype = Dtype::F64);
FeatureMap read_feature_map(const std::string& path);

std::string feature_map_to_json(const FeatureMap& fm);
FeatureMap feature_map_from_json(const std::string& json_text);

}  // namespace lga
