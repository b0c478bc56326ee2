#include "lga/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lga {

namespace fs = std::filesystem;

void save_grouped_linear(const std::string& dir, const std::string& name,
                         const GroupedLinear& g) {
  FeatureMap w(1, 1, static_cast<int>(g.weights.size()));
  w.values = g.weights;
  write_feature_map((fs::path(dir) / (name + ".weights.lgaf")).string(), w);
  if (!g.bias.empty()) {
    FeatureMap b(1, 1, static_cast<int>(g.bias.size()));
    b.values = g.bias;
    write_feature_map((fs::path(dir) / (name + ".bias.lgaf")).string(), b);
  }
}

GroupedLinear load_grouped_linear(const std::string& dir,
                                  const TensorEntry& entry) {
  GroupedLinear g(entry.in_channels, entry.out_channels, entry.groups,
                  entry.has_bias);
  const FeatureMap w = read_feature_map(
      (fs::path(dir) / (entry.name + ".weights.lgaf")).string());
  if (w.values.size() != g.weights.size())
    throw std::runtime_error("checkpoint: weight size mismatch for " + entry.name);
  g.weights = w.values;
  if (entry.has_bias) {
    const FeatureMap b = read_feature_map(
        (fs::path(dir) / (entry.name + ".bias.lgaf")).string());
    if (b.values.size() != g.bias.size())
      throw std::runtime_error("checkpoint: bias size mismatch for " + entry.name);
    g.bias = b.values;
  }
  return g;
}

namespace {

nlohmann::json tensor_manifest(const std::string& name,
                               const GroupedLinear& g) {
  return {{"name", name},
          {"in_channels", g.in_channels},
          {"out_channels", g.out_channels},
          {"groups", g.groups},
          {"bias", !g.bias.empty()}};
}

TensorEntry entry_from_json(const nlohmann::json& j) {
  TensorEntry e;
  e.name = j.at("name").get<std::string>();
  e.in_channels = j.at("in_channels").get<int>();
  e.out_channels = j.at("out_channels").get<int>();
  e.groups = j.at("groups").get<int>();
  e.has_bias = j.at("bias").get<bool>();
  return e;
}

const char* activation_tag(LayerActivation a) {
  return a == LayerActivation::ReluExceptLast ? "relu_except_last" : "identity";
}
const char* edge_activation_tag(EdgeActivation a) {
  switch (a) {
    case EdgeActivation::Softplus: return "softplus";
    case EdgeActivation::Abs: return "abs";
    case EdgeActivation::Sigmoid: return "sigmoid";
  }
  return "softplus";
}

}  // namespace

void save_lga_params(const std::string& dir, const LgaParams& p, double eps) {
  fs::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  if (p.input_reducer) {
    save_grouped_linear(dir, "reducer", *p.input_reducer);
    tensors.push_back(tensor_manifest("reducer", *p.input_reducer));
  }
  for (int d = 0; d < kNumDirections; ++d) {
    const std::string name = "edge_kernel_" + std::to_string(d);
    save_grouped_linear(dir, name, p.edge_kernels.kernels[d]);
    tensors.push_back(tensor_manifest(name, p.edge_kernels.kernels[d]));
  }
  for (int i = 0; i < p.layers(); ++i) {
    const std::string name = "transform_" + std::to_string(i);
    save_grouped_linear(dir, name, p.layer_transforms[i]);
    tensors.push_back(tensor_manifest(name, p.layer_transforms[i]));
  }
  nlohmann::json manifest{
      {"format", "lga-checkpoint-v1"},
      {"layers", p.layers()},
      {"eps", eps},
      {"activation", activation_tag(p.activation)},
      {"edge_activation", edge_activation_tag(p.edge_kernels.activation)},
      {"has_reducer", static_cast<bool>(p.input_reducer)},
      {"tensors", std::move(tensors)}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw std::runtime_error("save_lga_params: cannot write manifest");
}

LoadedLgaParams load_lga_params(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("load_lga_params: no manifest in " + dir);
  nlohmann::json manifest;
  is >> manifest;

  LoadedLgaParams out;
  out.eps = manifest.at("eps").get<double>();
  const int layers = manifest.at("layers").get<int>();
  const std::string act = manifest.at("activation").get<std::string>();
  out.params.activation = act == "identity" ? LayerActivation::Identity
                                            : LayerActivation::ReluExceptLast;
  const std::string eact = manifest.at("edge_activation").get<std::string>();

  std::vector<TensorEntry> entries;
  for (const auto& t : manifest.at("tensors")) entries.push_back(entry_from_json(t));
  auto find = [&](const std::string& name) -> const TensorEntry& {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw std::runtime_error("load_lga_params: missing tensor " + name);
  };

  if (manifest.at("has_reducer").get<bool>())
    out.params.input_reducer = load_grouped_linear(dir, find("reducer"));
  for (int d = 0; d < kNumDirections; ++d)
    out.params.edge_kernels.kernels[d] =
        load_grouped_linear(dir, find("edge_kernel_" + std::to_string(d)));
  out.params.edge_kernels.activation =
      eact == "abs" ? EdgeActivation::Abs
      : eact == "sigmoid" ? EdgeActivation::Sigmoid
                          : EdgeActivation::Softplus;
  for (int i = 0; i < layers; ++i)
    out.params.layer_transforms.push_back(
        load_grouped_linear(dir, find("transform_" + std::to_string(i))));
  return out;
}

}  // namespace lga
