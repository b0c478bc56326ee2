#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lga {

/// Parameter and FLOP counts split the way the comparison tables report them.
/// One multiply-accumulate counts as `flops_per_mac` FLOPs (default 1, the
/// convention the published table arithmetic uses).
struct CostReport {
  long long params_channel_resize = 0;
  long long params_attention = 0;
  long long params_total = 0;
  long long flops_channel_resize = 0;
  long long flops_info_prop = 0;
  long long flops_other_conv = 0;
  long long flops_total = 0;
};

struct LgaCostConfig {
  int c_in = 512;
  int c_lga = 128;
  int groups = 1;
  int layers = 4;
  int height = 32;
  int width = 32;
  bool with_reducer = true;
  int flops_per_mac = 1;
};

/// Analytic counter for the LGA module. Information propagation uses the
/// structural edge count (3H-2)(3W-2) <= 9N; edge-kernel convolutions are
/// booked once under "other conv" since the graph is built once per forward.
CostReport count_lga(const LgaCostConfig& cfg);

struct CcnetCostConfig {
  int c_in = 512;
  int c_qk = 64;
  int c_v = 512;
  int height = 32;
  int width = 32;
  int recurrence = 2;
  // The published breakdown counts one 3x3 C_in->C_in conv worth of resizing
  // parameters but two applications worth of FLOPs; modelled here as a pair
  // of weight-tied in/out convolutions. See docs/cost-model.md.
  int resize_kernel = 3;
  int resize_applications = 2;
  bool resize_weights_tied = true;
  int flops_per_mac = 1;
};

CostReport count_ccnet(const CcnetCostConfig& cfg);

// Closed-form attention-term costs used for the analytic scaling fits.
double lga_attention_cost(double n, double channels, int layers = 4);
double ccnet_attention_cost(double n, double channels, int recurrence = 2);
double dense_attention_cost(double n, double channels);

struct ScalingFit {
  double exponent = 0.0;
  double log_intercept = 0.0;
  double residual = 0.0;  // RMS residual of log(cost) around the fit
  size_t points = 0;
};

/// Least-squares slope of log(cost) vs log(N). Requires >= 4 strictly
/// increasing N spanning at least 16x, and positive costs.
ScalingFit fit_scaling_exponent(
    const std::vector<std::pair<double, double>>& samples);

struct BenchSample {
  std::string model;
  long long nodes = 0;
  int channels = 0;
  double wall_ns_median = 0.0;
};

/// Times the attention-only kernel of `model` ("lga", "crisscross", "dense")
/// on square grids with the given sides. Median of `runs` measurements after
/// `warmups`, single-threaded; small problems are repeated within one
/// measurement to stay above timer resolution.
std::vector<BenchSample> run_scaling_benchmark(const std::string& model,
                                               const std::vector<int>& grid_sides,
                                               int channels, int runs = 11,
                                               int warmups = 2,
                                               uint64_t seed = 99);

/// Structural sparse-adjacency entry count for an H x W grid: (3H-2)(3W-2).
long long adjacency_entry_count(int height, int width);

}  // namespace lga
