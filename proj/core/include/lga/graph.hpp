#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lga/tensor.hpp"

namespace lga {

enum class EdgeActivation { Softplus, Abs, Sigmoid };

struct Direction {
  int dy;
  int dx;
};

// Direction order: self first, then the 8-neighborhood clockwise from north.
inline constexpr int kNumDirections = 9;
inline constexpr std::array<Direction, kNumDirections> kDirections = {
    {{0, 0}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

double edge_activation(EdgeActivation act, double z);
double edge_activation_grad(EdgeActivation act, double z);

/// Nine per-direction 1x1 kernels, each mapping C channels to one scalar.
struct EdgeKernels {
  std::array<GroupedLinear, kNumDirections> kernels;
  EdgeActivation activation = EdgeActivation::Softplus;

  static EdgeKernels zeros(int channels, bool with_bias = false);
  static EdgeKernels random(int channels, std::mt19937_64& rng,
                            double scale = 0.5, bool with_bias = false);

  int channels() const { return kernels[0].in_channels; }
  long long param_count() const;
};

/// Per-direction scalar fields over the grid. Pre-activation values are kept
/// for the backward pass.
struct EdgeMaps {
  int height = 0;
  int width = 0;
  std::array<std::vector<double>, kNumDirections> pre;
  std::array<std::vector<double>, kNumDirections> act;
};

EdgeMaps compute_edge_maps(const FeatureMap& f_in, const EdgeKernels& k);
EdgeMaps compute_edge_maps(const NodeMatrix& x, int height, int width,
                           const EdgeKernels& k);

/// Sparse directed graph over the grid in CSR-by-source form. Edges that
/// would leave the grid are structurally absent, so entry_count() < 9N on
/// any grid with a border.
struct LocalGraph {
  int height = 0;
  int width = 0;
  double eps = 0.0;

  std::vector<int> offsets;      // size N+1
  std::vector<int> dst;          // edge target node
  std::vector<uint8_t> dir;      // direction index of each edge
  std::vector<double> raw;       // activated edge weight at the source node
  std::vector<double> norm;      // raw / (source outgoing sum + eps)
  std::vector<double> out_sum;   // per-node sum of raw outgoing weights

  int nodes() const { return height * width; }
  size_t entry_count() const { return dst.size(); }
  bool normalized() const { return !norm.empty(); }
};

LocalGraph assemble_adjacency(const EdgeMaps& maps, int height, int width);
LocalGraph normalize_adjacency(LocalGraph g, double eps);

/// Explicit N x N matrix M with M[i*N+j] = weight of edge i->j. Oracle-only;
/// rejects N > 4096.
std::vector<double> densify(const LocalGraph& g, bool use_normalized = true);

/// M[j] = sum over incoming edges i->j of x[i] * A_norm[i->j].
NodeMatrix message_pass(const NodeMatrix& x, const LocalGraph& g);

struct MessagePassGrads {
  NodeMatrix grad_x;
  std::vector<double> grad_norm;  // per edge, aligned with g.norm
};
MessagePassGrads message_pass_backward(const NodeMatrix& x, const LocalGraph& g,
                                       const NodeMatrix& grad_out);

/// Backprop through A_norm = raw / (out_sum + eps); returns per-edge grad_raw.
std::vector<double> normalize_adjacency_backward(
    const LocalGraph& g, const std::vector<double>& grad_norm);

std::string graph_to_json(const LocalGraph& g);

}  // namespace lga
