#include "lga/cost.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "lga/baselines.hpp"
#include "lga/graph.hpp"
#include "lga/tensor.hpp"

namespace lga {

long long adjacency_entry_count(int height, int width) {
  return static_cast<long long>(3 * height - 2) * (3 * width - 2);
}

CostReport count_lga(const LgaCostConfig& cfg) {
  if (cfg.c_in <= 0 || cfg.c_lga <= 0 || cfg.groups <= 0 || cfg.layers < 0 ||
      cfg.height <= 0 || cfg.width <= 0)
    throw std::invalid_argument("count_lga: invalid config");
  if (cfg.c_lga % cfg.groups != 0 ||
      (cfg.with_reducer && cfg.c_in % cfg.groups != 0))
    throw std::invalid_argument("count_lga: groups must divide channel counts");

  const long long n = static_cast<long long>(cfg.height) * cfg.width;
  const long long edges = adjacency_entry_count(cfg.height, cfg.width);
  const long long mac = cfg.flops_per_mac;

  CostReport r;
  r.params_channel_resize =
      cfg.with_reducer
          ? static_cast<long long>(cfg.c_in) * cfg.c_lga / cfg.groups
          : 0;
  r.params_attention =
      9LL * cfg.c_lga +
      static_cast<long long>(cfg.layers) * cfg.c_lga * cfg.c_lga / cfg.groups;
  r.params_total = r.params_channel_resize + r.params_attention;

  r.flops_channel_resize = r.params_channel_resize * n * mac;
  r.flops_info_prop = static_cast<long long>(cfg.layers) * edges * cfg.c_lga * mac;
  // per-layer node transforms plus the one-shot edge-kernel convolutions
  r.flops_other_conv =
      (static_cast<long long>(cfg.layers) * n * cfg.c_lga * cfg.c_lga /
           cfg.groups +
       (cfg.layers > 0 ? 9LL * n * cfg.c_lga : 0)) *
      mac;
  r.flops_total = r.flops_channel_resize + r.flops_info_prop + r.flops_other_conv;
  return r;
}

CostReport count_ccnet(const CcnetCostConfig& cfg) {
  if (cfg.c_in <= 0 || cfg.c_qk <= 0 || cfg.c_v <= 0 || cfg.height <= 0 ||
      cfg.width <= 0 || cfg.recurrence < 0)
    throw std::invalid_argument("count_ccnet: invalid config");
  const long long n = static_cast<long long>(cfg.height) * cfg.width;
  const long long set_size = cfg.height + cfg.width - 1;
  const long long mac = cfg.flops_per_mac;

  const long long resize_params_one =
      static_cast<long long>(cfg.resize_kernel) * cfg.resize_kernel *
      cfg.c_in * cfg.c_in;
  const long long qkv_params =
      2LL * cfg.c_in * cfg.c_qk + static_cast<long long>(cfg.c_in) * cfg.c_v;

  CostReport r;
  r.params_channel_resize = cfg.resize_weights_tied
                                ? resize_params_one
                                : resize_params_one * cfg.resize_applications;
  r.params_attention = qkv_params;
  r.params_total = r.params_channel_resize + r.params_attention;

  r.flops_channel_resize =
      resize_params_one * cfg.resize_applications * n * mac;
  r.flops_info_prop = static_cast<long long>(cfg.recurrence) * n * set_size *
                      (cfg.c_qk + cfg.c_v) * mac;
  r.flops_other_conv =
      static_cast<long long>(cfg.recurrence) * n * qkv_params * mac;
  r.flops_total = r.flops_channel_resize + r.flops_info_prop + r.flops_other_conv;
  return r;
}

double lga_attention_cost(double n, double channels, int layers) {
  return layers * 9.0 * n * channels;
}

double ccnet_attention_cost(double n, double channels, int recurrence) {
  return recurrence * n * 2.0 * std::sqrt(n) * channels;
}

double dense_attention_cost(double n, double channels) {
  return n * n * channels;
}

ScalingFit fit_scaling_exponent(
    const std::vector<std::pair<double, double>>& samples) {
  if (samples.size() < 4)
    throw std::invalid_argument("fit_scaling_exponent: need >= 4 points");
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].first <= 0 || samples[i].second <= 0)
      throw std::invalid_argument("fit_scaling_exponent: nonpositive sample");
    if (i > 0 && samples[i].first <= samples[i - 1].first)
      throw std::invalid_argument("fit_scaling_exponent: N must be strictly increasing");
  }
  if (samples.back().first < 16.0 * samples.front().first)
    throw std::invalid_argument("fit_scaling_exponent: N must span >= 16x");

  const size_t m = samples.size();
  double sx = 0, sy = 0;
  for (const auto& [n, c] : samples) {
    sx += std::log(n);
    sy += std::log(c);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (const auto& [n, c] : samples) {
    const double dx = std::log(n) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(c) - my);
  }
  ScalingFit fit;
  fit.exponent = sxy / sxx;
  fit.log_intercept = my - fit.exponent * mx;
  double ss = 0;
  for (const auto& [n, c] : samples) {
    const double r = std::log(c) - (fit.log_intercept + fit.exponent * std::log(n));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / m);
  fit.points = m;
  return fit;
}

namespace {

NodeMatrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  NodeMatrix m(rows, cols);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : m.values) v = dist(rng);
  return m;
}

LocalGraph random_normalized_graph(int side, std::mt19937_64& rng) {
  EdgeMaps maps;
  maps.height = side;
  maps.width = side;
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  const int n = side * side;
  for (int d = 0; d < kNumDirections; ++d) {
    maps.pre[d].resize(n);
    maps.act[d].resize(n);
    for (int i = 0; i < n; ++i) maps.act[d][i] = dist(rng);
  }
  return normalize_adjacency(assemble_adjacency(maps, side, side), 1e-6);
}

}  // namespace

std::vector<BenchSample> run_scaling_benchmark(const std::string& model,
                                               const std::vector<int>& grid_sides,
                                               int channels, int runs,
                                               int warmups, uint64_t seed) {
  if (model != "lga" && model != "crisscross" && model != "dense")
    throw std::invalid_argument("run_scaling_benchmark: unknown model " + model);
  std::vector<BenchSample> out;
  std::mt19937_64 rng(seed);
  volatile double sink = 0.0;  // keeps the kernels from being optimized away

  for (int side : grid_sides) {
    const long long n = static_cast<long long>(side) * side;
    double est_macs;
    if (model == "lga")
      est_macs = 4.0 * 9.0 * n * channels;
    else if (model == "crisscross")
      est_macs = 2.0 * n * (2.0 * side - 1) * 2.0 * channels;
    else
      est_macs = static_cast<double>(n) * n * 2.0 * channels;
    const int repeats =
        std::max(1, static_cast<int>(std::ceil(3.0e7 / est_macs)));

    NodeMatrix x = random_matrix(static_cast<int>(n), channels, rng);
    LocalGraph graph;
    NodeMatrix q, k, v;
    if (model == "lga") {
      graph = random_normalized_graph(side, rng);
    } else {
      q = random_matrix(static_cast<int>(n), channels, rng);
      k = random_matrix(static_cast<int>(n), channels, rng);
      v = random_matrix(static_cast<int>(n), channels, rng);
    }

    auto run_once = [&]() {
      if (model == "lga") {
        NodeMatrix cur = message_pass(x, graph);
        for (int layer = 1; layer < 4; ++layer) cur = message_pass(cur, graph);
        sink = sink + cur.values[0];
      } else if (model == "crisscross") {
        NodeMatrix cur = crisscross_attention_core(q, k, v, side, side);
        cur = crisscross_attention_core(q, k, cur, side, side);
        sink = sink + cur.values[0];
      } else {
        NodeMatrix cur = dense_attention_core(q, k, v);
        sink = sink + cur.values[0];
      }
    };

    std::vector<double> times;
    times.reserve(runs);
    for (int r = 0; r < warmups + runs; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int rep = 0; rep < repeats; ++rep) run_once();
      const auto t1 = std::chrono::steady_clock::now();
      if (r < warmups) continue;
      times.push_back(
          std::chrono::duration<double, std::nano>(t1 - t0).count() / repeats);
    }
    std::sort(times.begin(), times.end());
    BenchSample s;
    s.model = model;
    s.nodes = n;
    s.channels = channels;
    s.wall_ns_median = times[times.size() / 2];
    out.push_back(std::move(s));
  }
  (void)sink;
  return out;
}

}  // namespace lga
