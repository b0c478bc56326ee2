#pragma once

#include <string>
#include <vector>

#include "lga/module.hpp"

namespace lga {

/// One named parameter tensor inside a checkpoint.
struct TensorEntry {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;
  bool has_bias = false;
};

/// Checkpoint layout: <dir>/manifest.json plus one FeatureMap binary per
/// tensor (weights as 1 x 1 x K, bias as 1 x 1 x C_out when present).
void save_grouped_linear(const std::string& dir, const std::string& name,
                         const GroupedLinear& g);
GroupedLinear load_grouped_linear(const std::string& dir,
                                  const TensorEntry& entry);

void save_lga_params(const std::string& dir, const LgaParams& p, double eps);

struct LoadedLgaParams {
  LgaParams params;
  double eps = 1e-6;
};
LoadedLgaParams load_lga_params(const std::string& dir);

}  // namespace lga
