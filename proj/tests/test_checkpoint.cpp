#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "lga/checkpoint.hpp"

using namespace lga;
namespace fs = std::filesystem;

namespace {

FeatureMap random_map(int h, int w, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FeatureMap x(h, w, c);
  for (double& v : x.values) v = dist(rng);
  return x;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("grouped linear round-trips with and without bias") {
  TempDir dir("ckpt_linear_test");
  std::mt19937_64 rng(801);
  for (bool bias : {false, true}) {
    const GroupedLinear g = GroupedLinear::random(8, 6, 2, rng, 0.5, bias);
    save_grouped_linear(dir.path.string(), "probe", g);
    TensorEntry e;
    e.name = "probe";
    e.in_channels = 8;
    e.out_channels = 6;
    e.groups = 2;
    e.has_bias = bias;
    const GroupedLinear back = load_grouped_linear(dir.path.string(), e);
    CHECK(back.weights == g.weights);
    CHECK(back.bias == g.bias);
  }
}

TEST_CASE("loading with a mismatched shape fails") {
  TempDir dir("ckpt_mismatch_test");
  std::mt19937_64 rng(802);
  const GroupedLinear g = GroupedLinear::random(8, 6, 2, rng);
  save_grouped_linear(dir.path.string(), "probe", g);
  TensorEntry e;
  e.name = "probe";
  e.in_channels = 4;  // wrong
  e.out_channels = 6;
  e.groups = 2;
  CHECK_THROWS_AS(load_grouped_linear(dir.path.string(), e),
                  std::runtime_error);
}

TEST_CASE("lga params round-trip bit for bit") {
  TempDir dir("ckpt_lga_test");
  std::mt19937_64 rng(803);
  const LgaParams p = LgaParams::random(12, 6, 3, 2, rng);
  const double eps = 2.5e-4;
  save_lga_params(dir.path.string(), p, eps);
  const LoadedLgaParams back = load_lga_params(dir.path.string());

  CHECK(back.eps == eps);
  CHECK(back.params.layers() == 3);
  CHECK(back.params.activation == p.activation);
  CHECK(back.params.edge_kernels.activation == p.edge_kernels.activation);
  REQUIRE(back.params.input_reducer.has_value());
  CHECK(back.params.input_reducer->weights == p.input_reducer->weights);
  for (int d = 0; d < kNumDirections; ++d)
    CHECK(back.params.edge_kernels.kernels[d].weights ==
          p.edge_kernels.kernels[d].weights);
  for (int i = 0; i < 3; ++i)
    CHECK(back.params.layer_transforms[i].weights ==
          p.layer_transforms[i].weights);

  // the loaded module behaves identically
  const FeatureMap x = random_map(5, 6, 12, 804);
  const LgaOutput a = lga_forward(x, p, eps, false);
  const LgaOutput b = lga_forward(x, back.params, back.eps, false);
  CHECK(a.f_out.values == b.f_out.values);
}

TEST_CASE("manifest records the format and structure") {
  TempDir dir("ckpt_manifest_test");
  std::mt19937_64 rng(805);
  const LgaParams p = LgaParams::random(8, 4, 2, 1, rng);
  save_lga_params(dir.path.string(), p, 1e-6);

  std::ifstream is(dir.path / "manifest.json");
  REQUIRE(is.good());
  nlohmann::json manifest;
  is >> manifest;
  CHECK(manifest.at("format") == "lga-checkpoint-v1");
  CHECK(manifest.at("layers") == 2);
  CHECK(manifest.at("eps") == 1e-6);
  CHECK(manifest.at("edge_activation") == "softplus");
  CHECK(manifest.at("has_reducer") == true);
  // reducer + 9 edge kernels + 2 transforms
  CHECK(manifest.at("tensors").size() == 12);
}

TEST_CASE("loading from a directory without a manifest fails") {
  TempDir dir("ckpt_empty_test");
  CHECK_THROWS_AS(load_lga_params(dir.path.string()), std::runtime_error);
}

TEST_CASE("missing tensor entries are reported") {
  TempDir dir("ckpt_missing_test");
  std::mt19937_64 rng(806);
  const LgaParams p = LgaParams::random(8, 4, 1, 1, rng);
  save_lga_params(dir.path.string(), p, 1e-6);

  // drop one tensor from the manifest
  nlohmann::json manifest;
  {
    std::ifstream is(dir.path / "manifest.json");
    is >> manifest;
  }
  auto& tensors = manifest.at("tensors");
  for (auto it = tensors.begin(); it != tensors.end(); ++it) {
    if (it->at("name") == "transform_0") {
      tensors.erase(it);
      break;
    }
  }
  {
    std::ofstream os(dir.path / "manifest.json");
    os << manifest.dump(2) << "\n";
  }
  CHECK_THROWS_AS(load_lga_params(dir.path.string()), std::runtime_error);
}
