#include "lga/graph.hpp"

#include <cmath>

#include <json.hpp>

namespace lga {

double edge_activation(EdgeActivation act, double z) {
  switch (act) {
    case EdgeActivation::Softplus:
      return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    case EdgeActivation::Abs:
      return std::abs(z);
    case EdgeActivation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
  }
  return 0.0;
}

double edge_activation_grad(EdgeActivation act, double z) {
  switch (act) {
    case EdgeActivation::Softplus:
      return 1.0 / (1.0 + std::exp(-z));
    case EdgeActivation::Abs:
      return z >= 0 ? 1.0 : -1.0;
    case EdgeActivation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

EdgeKernels EdgeKernels::zeros(int channels, bool with_bias) {
  EdgeKernels k;
  for (auto& g : k.kernels) g = GroupedLinear(channels, 1, 1, with_bias);
  return k;
}

EdgeKernels EdgeKernels::random(int channels, std::mt19937_64& rng,
                                double scale, bool with_bias) {
  EdgeKernels k;
  for (auto& g : k.kernels)
    g = GroupedLinear::random(channels, 1, 1, rng, scale, with_bias);
  return k;
}

long long EdgeKernels::param_count() const {
  long long total = 0;
  for (const auto& g : kernels) total += g.param_count();
  return total;
}

EdgeMaps compute_edge_maps(const NodeMatrix& x, int height, int width,
                           const EdgeKernels& k) {
  if (x.cols != k.channels())
    throw std::invalid_argument(
        "compute_edge_maps: input has " + std::to_string(x.cols) +
        " channels but edge kernels expect " + std::to_string(k.channels()));
  if (x.rows != height * width)
    throw std::invalid_argument("compute_edge_maps: node count != H*W");
  EdgeMaps maps;
  maps.height = height;
  maps.width = width;
  const int n = x.rows;
  for (int d = 0; d < kNumDirections; ++d) {
    maps.pre[d].resize(n);
    maps.act[d].resize(n);
    const auto& kern = k.kernels[d];
    for (int node = 0; node < n; ++node) {
      double z = 0.0;
      kern.apply(x.row(node), std::span<double>(&z, 1));
      maps.pre[d][node] = z;
      maps.act[d][node] = edge_activation(k.activation, z);
    }
    instr::add_macs(static_cast<long long>(n) * kern.in_channels);
  }
  return maps;
}

EdgeMaps compute_edge_maps(const FeatureMap& f_in, const EdgeKernels& k) {
  return compute_edge_maps(flatten_nodes(f_in), f_in.height, f_in.width, k);
}

LocalGraph assemble_adjacency(const EdgeMaps& maps, int height, int width) {
  if (maps.height != height || maps.width != width)
    throw std::invalid_argument("assemble_adjacency: edge map shape mismatch");
  LocalGraph g;
  g.height = height;
  g.width = width;
  const int n = height * width;
  g.offsets.assign(n + 1, 0);
  g.dst.reserve(static_cast<size_t>(n) * kNumDirections);
  g.dir.reserve(static_cast<size_t>(n) * kNumDirections);
  g.raw.reserve(static_cast<size_t>(n) * kNumDirections);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int src = y * width + x;
      for (int d = 0; d < kNumDirections; ++d) {
        const int ny = y + kDirections[d].dy;
        const int nx = x + kDirections[d].dx;
        if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
        g.dst.push_back(ny * width + nx);
        g.dir.push_back(static_cast<uint8_t>(d));
        g.raw.push_back(maps.act[d][src]);
      }
      g.offsets[src + 1] = static_cast<int>(g.dst.size());
    }
  }
  return g;
}

LocalGraph normalize_adjacency(LocalGraph g, double eps) {
  if (eps <= 0.0)
    throw std::invalid_argument("normalize_adjacency: eps must be > 0");
  g.eps = eps;
  const int n = g.nodes();
  g.out_sum.assign(n, 0.0);
  g.norm.resize(g.raw.size());
  for (int src = 0; src < n; ++src) {
    double s = 0.0;
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e) s += g.raw[e];
    g.out_sum[src] = s;
    const double denom = s + eps;
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e)
      g.norm[e] = g.raw[e] / denom;
  }
  return g;
}

std::vector<double> densify(const LocalGraph& g, bool use_normalized) {
  const int n = g.nodes();
  if (n > 4096)
    throw std::invalid_argument("densify: N > 4096 (oracle-only path)");
  if (use_normalized && !g.normalized())
    throw std::invalid_argument("densify: graph is not normalized");
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  const auto& w = use_normalized ? g.norm : g.raw;
  for (int src = 0; src < n; ++src)
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e)
      m[static_cast<size_t>(src) * n + g.dst[e]] = w[e];
  return m;
}

NodeMatrix message_pass(const NodeMatrix& x, const LocalGraph& g) {
  if (!g.normalized())
    throw std::invalid_argument("message_pass: graph is not normalized");
  if (x.rows != g.nodes())
    throw std::invalid_argument("message_pass: node count mismatch");
  const int c = x.cols;
  NodeMatrix out(x.rows, c);
  for (int src = 0; src < g.nodes(); ++src) {
    auto xs = x.row(src);
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e) {
      const double w = g.norm[e];
      auto od = out.row(g.dst[e]);
      for (int k = 0; k < c; ++k) od[k] += w * xs[k];
    }
  }
  instr::add_macs(static_cast<long long>(g.entry_count()) * c);
  return out;
}

MessagePassGrads message_pass_backward(const NodeMatrix& x,
                                       const LocalGraph& g,
                                       const NodeMatrix& grad_out) {
  MessagePassGrads grads;
  grads.grad_x = NodeMatrix(x.rows, x.cols);
  grads.grad_norm.assign(g.norm.size(), 0.0);
  const int c = x.cols;
  for (int src = 0; src < g.nodes(); ++src) {
    auto xs = x.row(src);
    auto gx = grads.grad_x.row(src);
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e) {
      auto go = grad_out.row(g.dst[e]);
      const double w = g.norm[e];
      double gw = 0.0;
      for (int k = 0; k < c; ++k) {
        gx[k] += w * go[k];
        gw += xs[k] * go[k];
      }
      grads.grad_norm[e] = gw;
    }
  }
  return grads;
}

std::vector<double> normalize_adjacency_backward(
    const LocalGraph& g, const std::vector<double>& grad_norm) {
  if (grad_norm.size() != g.raw.size())
    throw std::invalid_argument("normalize_adjacency_backward: size mismatch");
  std::vector<double> grad_raw(g.raw.size(), 0.0);
  for (int src = 0; src < g.nodes(); ++src) {
    const double denom = g.out_sum[src] + g.eps;
    double dot = 0.0;  // sum_d grad_norm[d] * raw[d]
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e)
      dot += grad_norm[e] * g.raw[e];
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e)
      grad_raw[e] = grad_norm[e] / denom - dot / (denom * denom);
  }
  return grad_raw;
}

std::string graph_to_json(const LocalGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (int src = 0; src < g.nodes(); ++src) {
    for (int e = g.offsets[src]; e < g.offsets[src + 1]; ++e) {
      nlohmann::json entry{{"src", src},
                           {"dst", g.dst[e]},
                           {"raw", g.raw[e]}};
      if (g.normalized()) entry["norm"] = g.norm[e];
      edges.push_back(std::move(entry));
    }
  }
  nlohmann::json j{{"height", g.height}, {"width", g.width},
                   {"eps", g.eps},       {"edges", std::move(edges)}};
  return j.dump(2);
}

}  // namespace lga
