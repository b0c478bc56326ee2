#include "lga/baselines.hpp"

#include <cmath>

namespace lga {

AttentionParams AttentionParams::random(int c, int c_qk, int c_v,
                                        std::mt19937_64& rng, int recurrence,
                                        double scale) {
  if (c_qk > c)
    throw std::invalid_argument("AttentionParams: C_qk must be <= C");
  if (recurrence < 1)
    throw std::invalid_argument("AttentionParams: recurrence must be >= 1");
  AttentionParams p;
  p.query = GroupedLinear::random(c, c_qk, 1, rng, scale);
  p.key = GroupedLinear::random(c, c_qk, 1, rng, scale);
  p.value = GroupedLinear::random(c, c_v, 1, rng, scale);
  p.recurrence = recurrence;
  return p;
}

namespace {

void softmax_inplace(std::vector<double>& scores) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (double& s : scores) s /= sum;
}

}  // namespace

NodeMatrix dense_attention_core(const NodeMatrix& q, const NodeMatrix& k,
                                const NodeMatrix& v) {
  const int n = q.rows;
  const int c_qk = q.cols;
  const int c_v = v.cols;
  NodeMatrix out(n, c_v);
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) {
    auto qi = q.row(i);
    for (int j = 0; j < n; ++j) {
      auto kj = k.row(j);
      double s = 0.0;
      for (int c = 0; c < c_qk; ++c) s += qi[c] * kj[c];
      scores[j] = s;
    }
    softmax_inplace(scores);
    auto oi = out.row(i);
    for (int j = 0; j < n; ++j) {
      const double w = scores[j];
      auto vj = v.row(j);
      for (int c = 0; c < c_v; ++c) oi[c] += w * vj[c];
    }
  }
  instr::add_macs(static_cast<long long>(n) * n * (c_qk + c_v));
  return out;
}

FeatureMap dense_attention(const FeatureMap& x, const AttentionParams& p) {
  if (x.channels != p.query.in_channels)
    throw std::invalid_argument("dense_attention: channel mismatch");
  if (x.nodes() > 4096)
    throw std::invalid_argument("dense_attention: N > 4096 (oracle/bench only)");
  const NodeMatrix nodes = flatten_nodes(x);
  const NodeMatrix q = conv1x1_grouped(nodes, p.query);
  const NodeMatrix k = conv1x1_grouped(nodes, p.key);
  const NodeMatrix v = conv1x1_grouped(nodes, p.value);
  return unflatten_nodes(dense_attention_core(q, k, v), x.height, x.width);
}

NodeMatrix crisscross_attention_core(const NodeMatrix& q, const NodeMatrix& k,
                                     const NodeMatrix& v, int height,
                                     int width) {
  const int c_qk = q.cols;
  const int c_v = v.cols;
  NodeMatrix out(q.rows, c_v);
  const int set_size = height + width - 1;
  std::vector<int> members(set_size);
  std::vector<double> scores(set_size);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int i = y * width + x;
      int m = 0;
      for (int xx = 0; xx < width; ++xx) members[m++] = y * width + xx;
      for (int yy = 0; yy < height; ++yy)
        if (yy != y) members[m++] = yy * width + x;  // self appears once
      auto qi = q.row(i);
      for (int s = 0; s < set_size; ++s) {
        auto kj = k.row(members[s]);
        double acc = 0.0;
        for (int c = 0; c < c_qk; ++c) acc += qi[c] * kj[c];
        scores[s] = acc;
      }
      softmax_inplace(scores);
      auto oi = out.row(i);
      for (int s = 0; s < set_size; ++s) {
        const double w = scores[s];
        auto vj = v.row(members[s]);
        for (int c = 0; c < c_v; ++c) oi[c] += w * vj[c];
      }
    }
  }
  instr::add_macs(static_cast<long long>(q.rows) * set_size * (c_qk + c_v));
  return out;
}

FeatureMap crisscross_attention(const FeatureMap& x, const AttentionParams& p) {
  if (x.channels != p.query.in_channels)
    throw std::invalid_argument("crisscross_attention: channel mismatch");
  if (p.recurrence > 1 && p.value.out_channels != p.query.in_channels)
    throw std::invalid_argument(
        "crisscross_attention: recurrence needs C_v == C for composition");
  NodeMatrix cur = flatten_nodes(x);
  for (int r = 0; r < p.recurrence; ++r) {
    const NodeMatrix q = conv1x1_grouped(cur, p.query);
    const NodeMatrix k = conv1x1_grouped(cur, p.key);
    const NodeMatrix v = conv1x1_grouped(cur, p.value);
    cur = crisscross_attention_core(q, k, v, x.height, x.width);
  }
  return unflatten_nodes(cur, x.height, x.width);
}

}  // namespace lga
