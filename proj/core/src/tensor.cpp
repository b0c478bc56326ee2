#include "lga/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lga {

bool FeatureMap::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

GroupedLinear::GroupedLinear(int c_in, int c_out, int g, bool with_bias)
    : in_channels(c_in), out_channels(c_out), groups(g) {
  if (c_in <= 0 || c_out <= 0 || g <= 0)
    throw std::invalid_argument("GroupedLinear: dimensions must be positive");
  if (c_in % g != 0 || c_out % g != 0)
    throw std::invalid_argument(
        "GroupedLinear: groups must divide both in_channels (" +
        std::to_string(c_in) + ") and out_channels (" + std::to_string(c_out) +
        "), got G=" + std::to_string(g));
  weights.assign(static_cast<size_t>(c_in) * c_out / g, 0.0);
  if (with_bias) bias.assign(c_out, 0.0);
}

GroupedLinear GroupedLinear::identity(int c) {
  GroupedLinear w(c, c, 1);
  for (int i = 0; i < c; ++i) w.w(0, i, i) = 1.0;
  return w;
}

GroupedLinear GroupedLinear::random(int c_in, int c_out, int g,
                                    std::mt19937_64& rng, double scale,
                                    bool with_bias) {
  GroupedLinear w(c_in, c_out, g, with_bias);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : w.weights) v = dist(rng);
  for (double& v : w.bias) v = dist(rng);
  return w;
}

void GroupedLinear::apply(std::span<const double> in,
                          std::span<double> out) const {
  const int ipg = in_per_group();
  const int opg = out_per_group();
  for (int g = 0; g < groups; ++g) {
    const double* xin = in.data() + static_cast<size_t>(g) * ipg;
    for (int o = 0; o < opg; ++o) {
      const double* wrow =
          weights.data() + (static_cast<size_t>(g) * opg + o) * ipg;
      double acc = bias.empty() ? 0.0 : bias[g * opg + o];
      for (int i = 0; i < ipg; ++i) acc += wrow[i] * xin[i];
      out[g * opg + o] = acc;
    }
  }
}

namespace {

void check_conv_shapes(int x_channels, const GroupedLinear& w) {
  if (x_channels != w.in_channels)
    throw std::invalid_argument(
        "conv1x1_grouped: input has " + std::to_string(x_channels) +
        " channels but weights expect " + std::to_string(w.in_channels));
}

template <typename In, typename Out>
void conv_forward_nodes(const In& x, const GroupedLinear& w, Out& y, int n) {
  for (int node = 0; node < n; ++node) w.apply(x.row(node), y.row(node));
  instr::add_macs(static_cast<long long>(n) * w.in_channels * w.out_channels /
                  w.groups);
}

struct MapAsRows {
  const FeatureMap& m;
  std::span<const double> row(int n) const { return m.node(n); }
};
struct MutMapAsRows {
  FeatureMap& m;
  std::span<double> row(int n) { return m.node(n); }
};

template <typename XRows, typename GRows>
void conv_backward_core(const XRows& x, const GroupedLinear& w,
                        const GRows& grad_out, int n, auto grad_x_row,
                        GroupedLinear& grad_w) {
  const int ipg = w.in_per_group();
  const int opg = w.out_per_group();
  for (int node = 0; node < n; ++node) {
    auto xr = x.row(node);
    auto gr = grad_out.row(node);
    auto gx = grad_x_row(node);
    for (int g = 0; g < w.groups; ++g) {
      for (int o = 0; o < opg; ++o) {
        const double go = gr[g * opg + o];
        if (!grad_w.bias.empty()) grad_w.bias[g * opg + o] += go;
        const double* wrow =
            w.weights.data() + (static_cast<size_t>(g) * opg + o) * ipg;
        double* gwrow =
            grad_w.weights.data() + (static_cast<size_t>(g) * opg + o) * ipg;
        for (int i = 0; i < ipg; ++i) {
          gx[g * ipg + i] += go * wrow[i];
          gwrow[i] += go * xr[g * ipg + i];
        }
      }
    }
  }
}

}  // namespace

FeatureMap conv1x1_grouped(const FeatureMap& x, const GroupedLinear& w) {
  check_conv_shapes(x.channels, w);
  FeatureMap y(x.height, x.width, w.out_channels);
  MapAsRows xin{x};
  MutMapAsRows yout{y};
  conv_forward_nodes(xin, w, yout, x.nodes());
  return y;
}

NodeMatrix conv1x1_grouped(const NodeMatrix& x, const GroupedLinear& w) {
  check_conv_shapes(x.cols, w);
  NodeMatrix y(x.rows, w.out_channels);
  conv_forward_nodes(x, w, y, x.rows);
  return y;
}

Conv1x1Grads conv1x1_grouped_backward(const FeatureMap& x,
                                      const GroupedLinear& w,
                                      const FeatureMap& grad_out) {
  check_conv_shapes(x.channels, w);
  if (grad_out.height != x.height || grad_out.width != x.width ||
      grad_out.channels != w.out_channels)
    throw std::invalid_argument("conv1x1_grouped_backward: grad_out shape mismatch");
  Conv1x1Grads g;
  g.grad_x = FeatureMap(x.height, x.width, x.channels);
  g.grad_w = GroupedLinear(w.in_channels, w.out_channels, w.groups,
                           !w.bias.empty());
  MapAsRows xin{x};
  MapAsRows gout{grad_out};
  MutMapAsRows gx{g.grad_x};
  conv_backward_core(xin, w, gout, x.nodes(),
                     [&](int n) { return gx.row(n); }, g.grad_w);
  return g;
}

Conv1x1GradsNodes conv1x1_grouped_backward(const NodeMatrix& x,
                                           const GroupedLinear& w,
                                           const NodeMatrix& grad_out) {
  check_conv_shapes(x.cols, w);
  if (grad_out.rows != x.rows || grad_out.cols != w.out_channels)
    throw std::invalid_argument("conv1x1_grouped_backward: grad_out shape mismatch");
  Conv1x1GradsNodes g;
  g.grad_x = NodeMatrix(x.rows, x.cols);
  g.grad_w = GroupedLinear(w.in_channels, w.out_channels, w.groups,
                           !w.bias.empty());
  conv_backward_core(x, w, grad_out, x.rows,
                     [&](int n) { return g.grad_x.row(n); }, g.grad_w);
  return g;
}

NodeMatrix flatten_nodes(const FeatureMap& x) {
  NodeMatrix m(x.nodes(), x.channels);
  m.values = x.values;
  return m;
}

FeatureMap unflatten_nodes(const NodeMatrix& m, int height, int width) {
  if (m.rows != height * width)
    throw std::invalid_argument("unflatten_nodes: row count != H*W");
  FeatureMap fm(height, width, m.cols);
  fm.values = m.values;
  return fm;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  FeatureMap out(a.height, a.width, a.channels + b.channels);
  for (int n = 0; n < a.nodes(); ++n) {
    auto oa = out.node(n);
    auto na = a.node(n);
    auto nb = b.node(n);
    std::copy(na.begin(), na.end(), oa.begin());
    std::copy(nb.begin(), nb.end(), oa.begin() + a.channels);
  }
  return out;
}

namespace {
constexpr char kMagic[4] = {'L', 'G', 'A', 'F'};

void write_u32_le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void write_feature_map(const std::string& path, const FeatureMap& fm,
                       Dtype dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_feature_map: cannot open " + path);
  os.write(kMagic, 4);
  write_u32_le(os, static_cast<uint32_t>(fm.height));
  write_u32_le(os, static_cast<uint32_t>(fm.width));
  write_u32_le(os, static_cast<uint32_t>(fm.channels));
  const uint8_t d = static_cast<uint8_t>(dtype);
  os.write(reinterpret_cast<const char*>(&d), 1);
  if (dtype == Dtype::F64) {
    // assumes little-endian host, as does the format
    os.write(reinterpret_cast<const char*>(fm.values.data()),
             static_cast<std::streamsize>(fm.values.size() * sizeof(double)));
  } else {
    std::vector<float> tmp(fm.values.begin(), fm.values.end());
    os.write(reinterpret_cast<const char*>(tmp.data()),
             static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write_feature_map: write failed " + path);
}

FeatureMap read_feature_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_feature_map: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_feature_map: bad magic in " + path);
  const uint32_t h = read_u32_le(is);
  const uint32_t w = read_u32_le(is);
  const uint32_t c = read_u32_le(is);
  uint8_t d = 0;
  is.read(reinterpret_cast<char*>(&d), 1);
  if (!is || (d != 0 && d != 1))
    throw std::runtime_error("read_feature_map: bad header in " + path);
  FeatureMap fm(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  if (d == 1) {
    is.read(reinterpret_cast<char*>(fm.values.data()),
            static_cast<std::streamsize>(fm.values.size() * sizeof(double)));
  } else {
    std::vector<float> tmp(fm.values.size());
    is.read(reinterpret_cast<char*>(tmp.data()),
            static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    std::copy(tmp.begin(), tmp.end(), fm.values.begin());
  }
  if (!is) throw std::runtime_error("read_feature_map: truncated file " + path);
  return fm;
}

std::string feature_map_to_json(const FeatureMap& fm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < fm.height; ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (int x = 0; x < fm.width; ++x) {
      nlohmann::json cell = nlohmann::json::array();
      for (int c = 0; c < fm.channels; ++c) cell.push_back(fm.at(y, x, c));
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json j{{"height", fm.height},
                   {"width", fm.width},
                   {"channels", fm.channels},
                   {"values", std::move(rows)}};
  return j.dump();
}

FeatureMap feature_map_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  FeatureMap fm(j.at("height").get<int>(), j.at("width").get<int>(),
                j.at("channels").get<int>());
  const auto& rows = j.at("values");
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x)
      for (int c = 0; c < fm.channels; ++c)
        fm.at(y, x, c) = rows.at(y).at(x).at(c).get<double>();
  return fm;
}

}  // namespace lga
