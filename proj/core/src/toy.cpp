#include "lga/toy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lga/checkpoint.hpp"

namespace lga {

namespace fs = std::filesystem;

std::vector<SyntheticSample> generate_dataset(int count, int height, int width,
                                              uint64_t seed, int cue_radius) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("generate_dataset: H, W must be >= 16");
  if (count <= 0) throw std::invalid_argument("generate_dataset: count must be > 0");

  const int obj_radius = std::min(height, width) / 4;
  const int ring = std::min(cue_radius, obj_radius);

  std::vector<SyntheticSample> data;
  data.reserve(count);
  std::mt19937_64 master(seed);
  for (int s = 0; s < count; ++s) {
    const uint64_t sample_seed = master();
    std::mt19937_64 rng(sample_seed);
    std::uniform_real_distribution<double> bg_noise(0.0, 0.25);
    std::uniform_real_distribution<double> obj_noise(0.0, 0.2);
    std::uniform_real_distribution<double> cue_noise(0.0, 0.05);
    std::uniform_int_distribution<int> cy_dist(obj_radius, height - 1 - obj_radius);
    std::uniform_int_distribution<int> cx_dist(obj_radius, width - 1 - obj_radius);
    std::uniform_int_distribution<int> cls_dist(1, 2);

    const int cy = cy_dist(rng);
    const int cx = cx_dist(rng);
    const int cls = cls_dist(rng);

    SyntheticSample sample;
    sample.seed = sample_seed;
    sample.image = FeatureMap(height, width, 3);
    sample.labels.assign(static_cast<size_t>(height) * width, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int dist = std::max(std::abs(y - cy), std::abs(x - cx));
        const bool in_object = dist <= obj_radius;
        sample.image.at(y, x, 0) =
            in_object ? 0.6 + obj_noise(rng) : bg_noise(rng);
        sample.image.at(y, x, 1) = cue_noise(rng);
        sample.image.at(y, x, 2) = cue_noise(rng);
        if (in_object) {
          sample.labels[static_cast<size_t>(y) * width + x] = cls;
          const bool cue = (ring == 0) || (dist == ring);
          if (cue) sample.image.at(y, x, cls) = 1.0;
        }
      }
    }
    data.push_back(std::move(sample));
  }
  return data;
}

void save_dataset(const std::string& dir,
                  const std::vector<SyntheticSample>& data) {
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (size_t i = 0; i < data.size(); ++i) {
    const std::string img = "sample_" + std::to_string(i) + ".image.lgaf";
    const std::string lab = "sample_" + std::to_string(i) + ".labels.lgaf";
    write_feature_map((fs::path(dir) / img).string(), data[i].image);
    FeatureMap labels(data[i].image.height, data[i].image.width, 1);
    for (size_t k = 0; k < data[i].labels.size(); ++k)
      labels.values[k] = data[i].labels[k];
    write_feature_map((fs::path(dir) / lab).string(), labels);
    index.push_back({{"image", img}, {"labels", lab}, {"seed", data[i].seed}});
  }
  std::ofstream os(fs::path(dir) / "index.json");
  os << index.dump(2) << "\n";
  if (!os) throw std::runtime_error("save_dataset: cannot write index");
}

std::vector<SyntheticSample> load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "index.json");
  if (!is) throw std::runtime_error("load_dataset: no index in " + dir);
  nlohmann::json index;
  is >> index;
  std::vector<SyntheticSample> data;
  for (const auto& e : index) {
    SyntheticSample s;
    s.image = read_feature_map(
        (fs::path(dir) / e.at("image").get<std::string>()).string());
    const FeatureMap labels = read_feature_map(
        (fs::path(dir) / e.at("labels").get<std::string>()).string());
    s.labels.resize(labels.values.size());
    for (size_t k = 0; k < labels.values.size(); ++k)
      s.labels[k] = static_cast<int>(std::lround(labels.values[k]));
    s.seed = e.at("seed").get<uint64_t>();
    data.push_back(std::move(s));
  }
  return data;
}

FeatureMap space_to_depth2(const FeatureMap& x) {
  if (x.height % 2 != 0 || x.width % 2 != 0)
    throw std::invalid_argument("space_to_depth2: H, W must be even");
  FeatureMap out(x.height / 2, x.width / 2, x.channels * 4);
  for (int y = 0; y < out.height; ++y)
    for (int xx = 0; xx < out.width; ++xx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          for (int c = 0; c < x.channels; ++c)
            out.at(y, xx, (2 * dy + dx) * x.channels + c) =
                x.at(2 * y + dy, 2 * xx + dx, c);
  return out;
}

FeatureMap depth_to_space2(const FeatureMap& x) {
  if (x.channels % 4 != 0)
    throw std::invalid_argument("depth_to_space2: channels must be divisible by 4");
  const int c_out = x.channels / 4;
  FeatureMap out(x.height * 2, x.width * 2, c_out);
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          for (int c = 0; c < c_out; ++c)
            out.at(2 * y + dy, 2 * xx + dx, c) =
                x.at(y, xx, (2 * dy + dx) * c_out + c);
  return out;
}

namespace {

FeatureMap relu(const FeatureMap& x) {
  FeatureMap out = x;
  for (double& v : out.values) v = v > 0 ? v : 0.0;
  return out;
}

void relu_backward_inplace(FeatureMap& grad, const FeatureMap& pre) {
  for (size_t k = 0; k < grad.values.size(); ++k)
    if (pre.values[k] <= 0) grad.values[k] = 0.0;
}

GroupedLinear scaled_random(int c_in, int c_out, int groups,
                            std::mt19937_64& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(c_in) / groups);
  return GroupedLinear::random(c_in, c_out, groups, rng, scale);
}

uint64_t mix_seed(uint64_t seed, uint64_t epoch, uint64_t index) {
  uint64_t h = seed * 0x9e3779b97f4a7c15ULL + epoch * 0xbf58476d1ce4e5b9ULL +
               index * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

}  // namespace

ToyModel ToyModel::random(const ToyModelConfig& cfg, uint64_t seed) {
  if (cfg.height % 4 != 0 || cfg.width % 4 != 0)
    throw std::invalid_argument("ToyModel: H, W must be divisible by 4");
  std::mt19937_64 rng(seed);
  ToyModel m;
  m.cfg = cfg;
  m.enc1 = scaled_random(12, cfg.enc1_channels, 1, rng);
  m.enc2 = scaled_random(4 * cfg.enc1_channels, cfg.enc2_channels, 1, rng);
  if (cfg.lga_enabled())
    m.lga = LgaParams::random(cfg.enc2_channels, cfg.lga_channels,
                              cfg.lga_layers, cfg.groups, rng,
                              cfg.lga_init_scale);
  m.dec1 = scaled_random(cfg.cat_channels(), 4 * cfg.dec_channels, 1, rng);
  m.dec2 = scaled_random(cfg.dec_channels, 4 * cfg.classes, 1, rng);
  return m;
}

std::vector<std::vector<double>*> ToyModel::param_tensors() {
  std::vector<std::vector<double>*> ts{&enc1.weights, &enc2.weights};
  if (lga) {
    if (lga->input_reducer) ts.push_back(&lga->input_reducer->weights);
    for (auto& k : lga->edge_kernels.kernels) ts.push_back(&k.weights);
    for (auto& t : lga->layer_transforms) ts.push_back(&t.weights);
  }
  ts.push_back(&dec1.weights);
  ts.push_back(&dec2.weights);
  return ts;
}

std::vector<const std::vector<double>*> ToyModel::param_tensors() const {
  auto mutable_ts = const_cast<ToyModel*>(this)->param_tensors();
  return {mutable_ts.begin(), mutable_ts.end()};
}

ToyForward toy_forward(const ToyModel& model, const FeatureMap& image,
                       bool keep_intermediates) {
  ToyForward f;
  f.enc1_in = space_to_depth2(image);
  f.enc1_pre = conv1x1_grouped(f.enc1_in, model.enc1);
  f.enc1_out = relu(f.enc1_pre);
  f.enc2_in = space_to_depth2(f.enc1_out);
  f.enc2_pre = conv1x1_grouped(f.enc2_in, model.enc2);
  f.enc2_out = relu(f.enc2_pre);
  if (model.lga) {
    f.lga_out = lga_forward(f.enc2_out, *model.lga, model.cfg.eps,
                            keep_intermediates);
    f.cat = f.lga_out->f_cat;
  } else {
    f.cat = f.enc2_out;
  }
  f.dec1_pre = conv1x1_grouped(f.cat, model.dec1);
  f.dec1_out = depth_to_space2(relu(f.dec1_pre));
  f.logits = depth_to_space2(conv1x1_grouped(f.dec1_out, model.dec2));
  return f;
}

namespace {

// Softmax cross-entropy averaged over pixels; fills grad and returns loss.
double softmax_ce(const FeatureMap& logits, const std::vector<int>& labels,
                  FeatureMap& grad) {
  const int n = logits.nodes();
  const int k = logits.channels;
  grad = FeatureMap(logits.height, logits.width, k);
  double loss = 0.0;
  std::vector<double> p(k);
  for (int node = 0; node < n; ++node) {
    auto row = logits.node(node);
    double mx = row[0];
    for (int c = 0; c < k; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      p[c] = std::exp(row[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < k; ++c) p[c] /= sum;
    const int label = labels[node];
    loss -= std::log(std::max(p[label], 1e-300));
    auto g = grad.node(node);
    for (int c = 0; c < k; ++c)
      g[c] = (p[c] - (c == label ? 1.0 : 0.0)) / n;
  }
  return loss / n;
}

void flatten_lga_grads(const LgaGrads& lg, std::vector<std::vector<double>>& out) {
  if (lg.grad_reducer) out.push_back(lg.grad_reducer->weights);
  for (const auto& k : lg.grad_edge_kernels.kernels) out.push_back(k.weights);
  for (const auto& t : lg.grad_transforms) out.push_back(t.weights);
}

}  // namespace

ToyLosses toy_backward(const ToyModel& model, const ToyForward& fwd,
                       const std::vector<int>& labels, double lambda,
                       bool divergence_loss, int pairs_per_step,
                       uint64_t pair_seed,
                       std::vector<std::vector<double>>& grads,
                       double contrastive_delta, DivergenceKind divergence_kind) {
  ToyLosses losses;
  FeatureMap grad_logits;
  losses.task_loss = softmax_ce(fwd.logits, labels, grad_logits);

  FeatureMap g = space_to_depth2(grad_logits);
  auto dec2_grads = conv1x1_grouped_backward(fwd.dec1_out, model.dec2, g);
  FeatureMap g_dec1 = space_to_depth2(dec2_grads.grad_x);
  relu_backward_inplace(g_dec1, fwd.dec1_pre);
  auto dec1_grads = conv1x1_grouped_backward(fwd.cat, model.dec1, g_dec1);
  FeatureMap g_cat = std::move(dec1_grads.grad_x);

  LgaGrads lga_grads;
  FeatureMap g_enc2out;
  if (model.lga) {
    if (divergence_loss && lambda != 0.0) {
      const int gh = fwd.enc2_out.height;
      const int gw = fwd.enc2_out.width;
      const int img_h = fwd.logits.height;
      const int img_w = fwd.logits.width;
      const auto sim = build_similarity_classes(labels, img_h, img_w, gh, gw);
      const auto pairs = sample_pairs(sim, pairs_per_step, pair_seed);
      const auto contrastive =
          lga_contrastive_loss(fwd.enc2_out, fwd.lga_out->f_out, sim, pairs,
                               divergence_kind, contrastive_delta);
      losses.contrastive_loss = contrastive.loss;
      const int c_in = fwd.enc2_out.channels;
      for (int node = 0; node < g_cat.nodes(); ++node) {
        auto gc = g_cat.node(node);
        auto go = contrastive.grad_f_out.node(node);
        for (int c = 0; c < contrastive.grad_f_out.channels; ++c)
          gc[c_in + c] += lambda * go[c];
      }
    }
    lga_grads = lga_backward(fwd.enc2_out, *model.lga, *fwd.lga_out, g_cat);
    g_enc2out = std::move(lga_grads.grad_f_in);
  } else {
    g_enc2out = std::move(g_cat);
  }

  relu_backward_inplace(g_enc2out, fwd.enc2_pre);
  auto enc2_grads = conv1x1_grouped_backward(fwd.enc2_in, model.enc2, g_enc2out);
  FeatureMap g_enc1out = depth_to_space2(enc2_grads.grad_x);
  relu_backward_inplace(g_enc1out, fwd.enc1_pre);
  auto enc1_grads = conv1x1_grouped_backward(fwd.enc1_in, model.enc1, g_enc1out);

  grads.clear();
  grads.push_back(std::move(enc1_grads.grad_w.weights));
  grads.push_back(std::move(enc2_grads.grad_w.weights));
  if (model.lga) flatten_lga_grads(lga_grads, grads);
  grads.push_back(std::move(dec1_grads.grad_w.weights));
  grads.push_back(std::move(dec2_grads.grad_w.weights));
  return losses;
}

void AdamOptimizer::step(std::vector<std::vector<double>*>& params,
                         const std::vector<std::vector<double>>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("AdamOptimizer: tensor count mismatch");
  if (m.empty()) {
    m.resize(params.size());
    v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i]->size(), 0.0);
      v[i].assign(params[i]->size(), 0.0);
    }
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = grads[i];
    for (size_t k = 0; k < p.size(); ++k) {
      m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * g[k];
      v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * g[k] * g[k];
      const double mhat = m[i][k] / bc1;
      const double vhat = v[i][k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double mean_iou(const std::vector<int>& predicted, const std::vector<int>& truth,
                int classes) {
  std::vector<long long> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (size_t k = 0; k < truth.size(); ++k) {
    if (predicted[k] == truth[k])
      ++tp[truth[k]];
    else {
      ++fp[predicted[k]];
      ++fn[truth[k]];
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < classes; ++c) {
    const long long uni = tp[c] + fp[c] + fn[c];
    if (uni == 0) continue;
    sum += static_cast<double>(tp[c]) / uni;
    ++counted;
  }
  return counted > 0 ? sum / counted : 0.0;
}

EvalMetrics evaluate(const ToyModel& model,
                     const std::vector<SyntheticSample>& data) {
  EvalMetrics metrics;
  std::vector<int> all_pred, all_true;
  for (const auto& sample : data) {
    const ToyForward f = toy_forward(model, sample.image, false);
    for (int node = 0; node < f.logits.nodes(); ++node) {
      auto row = f.logits.node(node);
      int best = 0;
      for (int c = 1; c < f.logits.channels; ++c)
        if (row[c] > row[best]) best = c;
      all_pred.push_back(best);
      all_true.push_back(sample.labels[node]);
    }
  }
  long long correct = 0;
  for (size_t k = 0; k < all_pred.size(); ++k)
    if (all_pred[k] == all_true[k]) ++correct;
  metrics.pixel_accuracy = static_cast<double>(correct) / all_pred.size();
  metrics.miou = mean_iou(all_pred, all_true, model.cfg.classes);
  return metrics;
}

std::vector<EpochMetrics> train(ToyModel& model,
                                const std::vector<SyntheticSample>& train_data,
                                const std::vector<SyntheticSample>& eval_data,
                                const TrainConfig& cfg) {
  if (train_data.empty()) throw std::invalid_argument("train: no training data");
  AdamOptimizer adam;
  adam.lr = cfg.lr;
  auto params = model.param_tensors();
  std::vector<std::vector<double>> grads;
  std::vector<EpochMetrics> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    adam.lr = epoch > cfg.lr_decay_epoch ? cfg.lr * cfg.lr_decay_factor : cfg.lr;
    double lambda = cfg.lambda;
    if (cfg.lambda_anneal_epochs > 0)
      lambda *= std::max(
          0.0, 1.0 - static_cast<double>(epoch - 1) / cfg.lambda_anneal_epochs);
    double epoch_task = 0.0, epoch_contrastive = 0.0;
    for (size_t i = 0; i < train_data.size(); ++i) {
      const auto& sample = train_data[i];
      const ToyForward fwd = toy_forward(model, sample.image);
      const ToyLosses losses = toy_backward(
          model, fwd, sample.labels, lambda, cfg.divergence_loss,
          cfg.pairs_per_step, mix_seed(cfg.seed, epoch, i), grads,
          cfg.contrastive_delta, cfg.divergence_kind);
      if (!std::isfinite(losses.task_loss) ||
          !std::isfinite(losses.contrastive_loss))
        throw std::runtime_error(
            "train: diverged (non-finite loss) at epoch " +
            std::to_string(epoch) + " sample " + std::to_string(i) +
            " (task=" + std::to_string(losses.task_loss) +
            " contrastive=" + std::to_string(losses.contrastive_loss) + ")");
      adam.step(params, grads);
      epoch_task += losses.task_loss;
      epoch_contrastive += losses.contrastive_loss;
    }
    const EvalMetrics eval = evaluate(model, eval_data.empty() ? train_data : eval_data);
    EpochMetrics em;
    em.epoch = epoch;
    em.task_loss = epoch_task / train_data.size();
    em.contrastive_loss = epoch_contrastive / train_data.size();
    em.pixel_accuracy = eval.pixel_accuracy;
    em.miou = eval.miou;
    history.push_back(em);

    if (!cfg.checkpoint_dir.empty() && model.lga)
      save_lga_params(
          (fs::path(cfg.checkpoint_dir) / ("epoch_" + std::to_string(epoch))).string(),
          *model.lga, model.cfg.eps);
  }
  return history;
}

std::vector<AblationRow> ablate(const std::string& axis,
                                const std::vector<std::string>& values,
                                const ToyModelConfig& model_cfg,
                                const TrainConfig& train_cfg,
                                const std::vector<SyntheticSample>& train_data,
                                const std::vector<SyntheticSample>& eval_data) {
  if (axis != "layers" && axis != "divergence_loss" && axis != "groups")
    throw std::invalid_argument("ablate: unknown axis " + axis);
  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    ToyModelConfig mc = model_cfg;
    TrainConfig tc = train_cfg;
    if (axis == "layers") {
      const int layers = std::stoi(value);
      mc.lga_layers = layers;
      mc.use_lga = layers > 0;
    } else if (axis == "divergence_loss") {
      tc.divergence_loss = (value == "on" || value == "1" || value == "true");
    } else {
      mc.groups = std::stoi(value);
    }
    ToyModel model = ToyModel::random(mc, tc.seed);
    const auto history = train(model, train_data, eval_data, tc);
    rows.push_back({value, history.back().miou});
  }
  return rows;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  os << "epoch,task_loss,contrastive_loss,pixel_accuracy,miou\n";
  os.precision(12);
  for (const auto& em : history)
    os << em.epoch << ',' << em.task_loss << ',' << em.contrastive_loss << ','
       << em.pixel_accuracy << ',' << em.miou << "\n";
}

}  // namespace lga
