#include "lga/module.hpp"

#include <cmath>

namespace lga {

long long LgaParams::param_count() const {
  long long total = edge_kernels.param_count();
  if (input_reducer) total += input_reducer->param_count();
  for (const auto& t : layer_transforms) total += t.param_count();
  return total;
}

LgaParams LgaParams::random(int c_in, int c_lga, int layers, int groups,
                            std::mt19937_64& rng, double scale,
                            bool with_reducer) {
  if (layers < 1) throw std::invalid_argument("LgaParams: layers must be >= 1");
  LgaParams p;
  if (with_reducer)
    p.input_reducer = GroupedLinear::random(c_in, c_lga, groups, rng, scale);
  else if (c_in != c_lga)
    throw std::invalid_argument("LgaParams: c_in must equal c_lga without a reducer");
  p.edge_kernels = EdgeKernels::random(c_lga, rng, scale);
  p.layer_transforms.reserve(layers);
  for (int i = 0; i < layers; ++i)
    p.layer_transforms.push_back(
        GroupedLinear::random(c_lga, c_lga, groups, rng, scale));
  return p;
}

LgaParams LgaParams::positive(int c_in, int c_lga, int layers, int groups,
                              std::mt19937_64& rng, bool with_reducer) {
  LgaParams p = random(c_in, c_lga, layers, groups, rng, 1.0, with_reducer);
  auto make_positive = [](GroupedLinear& g) {
    for (double& v : g.weights) v = 0.1 + 0.9 * std::abs(v);
  };
  if (p.input_reducer) make_positive(*p.input_reducer);
  for (auto& k : p.edge_kernels.kernels) make_positive(k);
  for (auto& t : p.layer_transforms) make_positive(t);
  return p;
}

namespace {

bool relu_at_layer(const LgaParams& p, int layer) {
  return p.activation == LayerActivation::ReluExceptLast &&
         layer + 1 < p.layers();
}

}  // namespace

LgaOutput lga_forward(const FeatureMap& f_in, const LgaParams& p, double eps,
                      bool keep_intermediates) {
  if (p.layers() < 1)
    throw std::invalid_argument("lga_forward: at least one layer required");
  if (f_in.channels != p.in_channels())
    throw std::invalid_argument(
        "lga_forward: input has " + std::to_string(f_in.channels) +
        " channels, params expect " + std::to_string(p.in_channels()));

  LgaOutput out;
  const NodeMatrix x_in = flatten_nodes(f_in);
  out.x0 = p.input_reducer ? conv1x1_grouped(x_in, *p.input_reducer) : x_in;

  // The graph is built once from the (reduced) input and shared by all layers.
  out.edge_maps =
      compute_edge_maps(out.x0, f_in.height, f_in.width, p.edge_kernels);
  out.graph = normalize_adjacency(
      assemble_adjacency(out.edge_maps, f_in.height, f_in.width), eps);

  const NodeMatrix* cur = &out.x0;
  for (int i = 0; i < p.layers(); ++i) {
    NodeMatrix m = message_pass(*cur, out.graph);
    NodeMatrix pre = conv1x1_grouped(m, p.layer_transforms[i]);
    NodeMatrix x_next = pre;
    if (relu_at_layer(p, i))
      for (double& v : x_next.values) v = v > 0 ? v : 0.0;
    out.msgs.push_back(std::move(m));
    out.preact.push_back(std::move(pre));
    out.xs.push_back(std::move(x_next));
    cur = &out.xs.back();
  }

  out.f_out = unflatten_nodes(out.xs.back(), f_in.height, f_in.width);
  out.f_cat = concat_channels(f_in, out.f_out);
  out.has_intermediates = true;
  if (!keep_intermediates) {
    out.has_intermediates = false;
    out.edge_maps = EdgeMaps{};
    out.x0 = NodeMatrix{};
    out.xs.clear();
    out.msgs.clear();
    out.preact.clear();
    out.graph = LocalGraph{};
  }
  return out;
}

LgaGrads lga_backward(const FeatureMap& f_in, const LgaParams& p,
                      const LgaOutput& out, const FeatureMap& grad_f_cat) {
  if (!out.has_intermediates)
    throw std::invalid_argument("lga_backward: forward intermediates missing");
  const int c_in = f_in.channels;
  const int c_lga = p.lga_channels();
  if (grad_f_cat.channels != c_in + c_lga ||
      grad_f_cat.height != f_in.height || grad_f_cat.width != f_in.width)
    throw std::invalid_argument("lga_backward: grad_f_cat shape mismatch");

  const int n = f_in.nodes();
  const int layers = p.layers();

  // Split the concatenated gradient.
  FeatureMap grad_f_in(f_in.height, f_in.width, c_in);
  NodeMatrix g(n, c_lga);
  for (int node = 0; node < n; ++node) {
    auto gc = grad_f_cat.node(node);
    auto gi = grad_f_in.node(node);
    auto go = g.row(node);
    std::copy(gc.begin(), gc.begin() + c_in, gi.begin());
    std::copy(gc.begin() + c_in, gc.end(), go.begin());
  }

  LgaGrads grads;
  grads.grad_transforms.resize(layers);
  std::vector<double> grad_norm(out.graph.norm.size(), 0.0);

  for (int i = layers - 1; i >= 0; --i) {
    if (relu_at_layer(p, i)) {
      const auto& pre = out.preact[i];
      for (size_t k = 0; k < g.values.size(); ++k)
        if (pre.values[k] <= 0) g.values[k] = 0.0;
    }
    auto conv_grads =
        conv1x1_grouped_backward(out.msgs[i], p.layer_transforms[i], g);
    grads.grad_transforms[i] = std::move(conv_grads.grad_w);

    const NodeMatrix& x_prev = (i == 0) ? out.x0 : out.xs[i - 1];
    auto mp_grads =
        message_pass_backward(x_prev, out.graph, conv_grads.grad_x);
    for (size_t e = 0; e < grad_norm.size(); ++e)
      grad_norm[e] += mp_grads.grad_norm[e];
    g = std::move(mp_grads.grad_x);
  }
  NodeMatrix grad_x0 = std::move(g);

  // Graph weights: normalization quotient, edge activation, edge kernels.
  const auto grad_raw = normalize_adjacency_backward(out.graph, grad_norm);
  std::array<std::vector<double>, kNumDirections> grad_z;
  for (auto& v : grad_z) v.assign(n, 0.0);
  for (int src = 0; src < n; ++src) {
    for (int e = out.graph.offsets[src]; e < out.graph.offsets[src + 1]; ++e) {
      const int d = out.graph.dir[e];
      grad_z[d][src] +=
          grad_raw[e] *
          edge_activation_grad(p.edge_kernels.activation, out.edge_maps.pre[d][src]);
    }
  }
  grads.grad_edge_kernels = EdgeKernels::zeros(
      c_lga, !p.edge_kernels.kernels[0].bias.empty());
  grads.grad_edge_kernels.activation = p.edge_kernels.activation;
  for (int d = 0; d < kNumDirections; ++d) {
    auto& gk = grads.grad_edge_kernels.kernels[d];
    const auto& kern = p.edge_kernels.kernels[d];
    for (int node = 0; node < n; ++node) {
      const double gz = grad_z[d][node];
      if (gz == 0.0) continue;
      auto x0n = out.x0.row(node);
      auto gx0 = grad_x0.row(node);
      for (int c = 0; c < c_lga; ++c) {
        gk.weights[c] += gz * x0n[c];
        gx0[c] += gz * kern.weights[c];
      }
      if (!gk.bias.empty()) gk.bias[0] += gz;
    }
  }

  // Through the reducer back to f_in.
  if (p.input_reducer) {
    const NodeMatrix x_in = flatten_nodes(f_in);
    auto red_grads = conv1x1_grouped_backward(x_in, *p.input_reducer, grad_x0);
    grads.grad_reducer = std::move(red_grads.grad_w);
    for (size_t k = 0; k < grad_f_in.values.size(); ++k)
      grad_f_in.values[k] += red_grads.grad_x.values[k];
  } else {
    for (size_t k = 0; k < grad_f_in.values.size(); ++k)
      grad_f_in.values[k] += grad_x0.values[k];
  }
  grads.grad_f_in = std::move(grad_f_in);
  return grads;
}

LgaGrads lga_backward_fout(const FeatureMap& f_in, const LgaParams& p,
                           const LgaOutput& out, const FeatureMap& grad_f_out) {
  FeatureMap zeros_in(f_in.height, f_in.width, f_in.channels);
  return lga_backward(f_in, p, out, concat_channels(zeros_in, grad_f_out));
}

std::set<int> receptive_field_probe(const LgaParams& p, int height, int width,
                                    int source_node, double eps,
                                    uint64_t seed) {
  if (source_node < 0 || source_node >= height * width)
    throw std::invalid_argument("receptive_field_probe: source out of range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 1.0);
  FeatureMap f_in(height, width, p.in_channels());
  for (double& v : f_in.values) v = dist(rng);

  const LgaOutput base = lga_forward(f_in, p, eps, false);
  FeatureMap perturbed = f_in;
  for (int c = 0; c < perturbed.channels; ++c)
    perturbed.node(source_node)[c] += 0.25;
  const LgaOutput bumped = lga_forward(perturbed, p, eps, false);

  std::set<int> influenced;
  for (int n = 0; n < height * width; ++n) {
    auto a = base.f_out.node(n);
    auto b = bumped.f_out.node(n);
    for (int c = 0; c < base.f_out.channels; ++c) {
      if (a[c] != b[c]) {
        influenced.insert(n);
        break;
      }
    }
  }
  return influenced;
}

}  // namespace lga
