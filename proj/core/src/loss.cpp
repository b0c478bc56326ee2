#include "lga/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include <json.hpp>

namespace lga {

namespace {

void softmax(std::span<const double> x, std::vector<double>& out) {
  out.resize(x.size());
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t k = 0; k < x.size(); ++k) {
    out[k] = std::exp(x[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("node_divergence: length mismatch");
  for (size_t k = 0; k < a.size(); ++k)
    if (!std::isfinite(a[k]) || !std::isfinite(b[k]))
      throw std::invalid_argument("node_divergence: non-finite input");
}

}  // namespace

double node_divergence(std::span<const double> a, std::span<const double> b,
                       DivergenceKind kind) {
  check_pair(a, b);
  if (kind == DivergenceKind::Mse) {
    double acc = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      acc += d * d;
    }
    return acc / static_cast<double>(a.size());
  }
  std::vector<double> p, q;
  softmax(a, p);
  softmax(b, q);
  double kl = 0.0;
  for (size_t k = 0; k < p.size(); ++k) kl += p[k] * std::log(p[k] / q[k]);
  return std::max(kl, 0.0);  // clamp tiny negative rounding residue
}

void node_divergence_backward(std::span<const double> a,
                              std::span<const double> b, DivergenceKind kind,
                              double upstream, std::span<double> grad_a,
                              std::span<double> grad_b) {
  check_pair(a, b);
  if (kind == DivergenceKind::Mse) {
    const double scale = 2.0 * upstream / static_cast<double>(a.size());
    for (size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      grad_a[k] += scale * d;
      grad_b[k] -= scale * d;
    }
    return;
  }
  std::vector<double> p, q;
  softmax(a, p);
  softmax(b, q);
  double kl = 0.0;
  for (size_t k = 0; k < p.size(); ++k) kl += p[k] * std::log(p[k] / q[k]);
  for (size_t k = 0; k < p.size(); ++k) {
    grad_a[k] += upstream * p[k] * (std::log(p[k] / q[k]) - kl);
    grad_b[k] += upstream * (q[k] - p[k]);
  }
}

double ssim(std::span<const double> patch_a, std::span<const double> patch_b,
            double k1, double k2, double dynamic_range) {
  if (patch_a.size() != patch_b.size() || patch_a.empty())
    throw std::invalid_argument("ssim: patch shape mismatch");
  const double n = static_cast<double>(patch_a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (size_t k = 0; k < patch_a.size(); ++k) {
    mu_a += patch_a[k];
    mu_b += patch_b[k];
  }
  mu_a /= n;
  mu_b /= n;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (size_t k = 0; k < patch_a.size(); ++k) {
    const double da = patch_a[k] - mu_a;
    const double db = patch_b[k] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= n;
  var_b /= n;
  cov /= n;
  const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

bool PatchSimilarity::similar(int i, int j) const {
  if (i == j) return true;
  if (mode == Mode::ClassMajority) return labels[i] == labels[j];
  return ssim(patches[i], patches[j]) > tau;
}

namespace {
void check_patch_grid(int gt_h, int gt_w, int height, int width) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("build_similarity: bad node grid");
  if (gt_h % height != 0 || gt_w % width != 0)
    throw std::invalid_argument(
        "build_similarity: ground truth " + std::to_string(gt_h) + "x" +
        std::to_string(gt_w) + " not divisible into " + std::to_string(height) +
        "x" + std::to_string(width) + " patches");
}
}  // namespace

PatchSimilarity build_similarity_classes(const std::vector<int>& gt, int gt_h,
                                         int gt_w, int height, int width) {
  check_patch_grid(gt_h, gt_w, height, width);
  if (gt.size() != static_cast<size_t>(gt_h) * gt_w)
    throw std::invalid_argument("build_similarity: gt size mismatch");
  const int ph = gt_h / height;
  const int pw = gt_w / width;
  PatchSimilarity sim;
  sim.mode = PatchSimilarity::Mode::ClassMajority;
  sim.labels.resize(static_cast<size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::map<int, int> counts;  // ordered: ties resolve to smallest id
      for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px)
          ++counts[gt[static_cast<size_t>(y * ph + py) * gt_w + x * pw + px]];
      int best_label = counts.begin()->first;
      int best_count = counts.begin()->second;
      for (const auto& [label, count] : counts) {
        if (count > best_count) {
          best_label = label;
          best_count = count;
        }
      }
      sim.labels[static_cast<size_t>(y) * width + x] = best_label;
    }
  }
  return sim;
}

PatchSimilarity build_similarity_ssim(const std::vector<double>& gt, int gt_h,
                                      int gt_w, int height, int width,
                                      double tau) {
  check_patch_grid(gt_h, gt_w, height, width);
  if (gt.size() != static_cast<size_t>(gt_h) * gt_w)
    throw std::invalid_argument("build_similarity: gt size mismatch");
  const int ph = gt_h / height;
  const int pw = gt_w / width;
  PatchSimilarity sim;
  sim.mode = PatchSimilarity::Mode::SsimThreshold;
  sim.tau = tau;
  sim.patches.resize(static_cast<size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto& patch = sim.patches[static_cast<size_t>(y) * width + x];
      patch.reserve(static_cast<size_t>(ph) * pw);
      for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px)
          patch.push_back(gt[static_cast<size_t>(y * ph + py) * gt_w + x * pw + px]);
    }
  }
  return sim;
}

std::string similarity_to_json(const PatchSimilarity& sim, bool include_pairs) {
  const int n = sim.node_count();
  nlohmann::json j;
  j["mode"] = sim.mode == PatchSimilarity::Mode::ClassMajority
                  ? "class_majority"
                  : "ssim_threshold";
  if (sim.mode == PatchSimilarity::Mode::ClassMajority)
    j["labels"] = sim.labels;
  else
    j["tau"] = sim.tau;
  if (include_pairs) {
    if (n > 1024)
      throw std::invalid_argument("similarity_to_json: pairwise dump limited to 1024 nodes");
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < n; ++k) row.push_back(sim.similar(i, k) ? 1 : 0);
      rows.push_back(std::move(row));
    }
    j["pairwise"] = std::move(rows);
  }
  return j.dump();
}

PairBatch sample_pairs(const PatchSimilarity& sim, int count, uint64_t seed) {
  const int n = sim.node_count();
  if (n < 2) throw std::invalid_argument("sample_pairs: need at least 2 nodes");
  const long long max_pairs = static_cast<long long>(n) * (n - 1) / 2;
  count = static_cast<int>(std::min<long long>(count, max_pairs));

  PairBatch batch;
  batch.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::unordered_set<long long> used;
  auto key = [n](int i, int j) {
    return static_cast<long long>(std::min(i, j)) * n + std::max(i, j);
  };

  int n_similar = 0;
  long long attempts = 0;
  const long long attempt_cap = 200LL * count + 1000;
  while (static_cast<int>(batch.pairs.size()) < count &&
         attempts++ < attempt_cap) {
    const int i = pick(rng);
    const int j = pick(rng);
    if (i == j || used.count(key(i, j))) continue;
    used.insert(key(i, j));
    batch.pairs.emplace_back(i, j);
    if (sim.similar(i, j)) ++n_similar;
  }

  // Top up each stratum to >= 25% when the other kind dominates the draw.
  const int quota = (count + 3) / 4;
  auto top_up = [&](bool want_similar) {
    int have = want_similar ? n_similar
                            : static_cast<int>(batch.pairs.size()) - n_similar;
    long long tries = 0;
    while (have < quota && tries++ < attempt_cap) {
      const int i = pick(rng);
      const int j = pick(rng);
      if (i == j || used.count(key(i, j))) continue;
      if (sim.similar(i, j) != want_similar) continue;
      // replace a pair of the over-represented kind
      for (size_t p = 0; p < batch.pairs.size(); ++p) {
        const bool s = sim.similar(batch.pairs[p].first, batch.pairs[p].second);
        if (s != want_similar) {
          used.insert(key(i, j));
          batch.pairs[p] = {i, j};
          if (want_similar)
            ++n_similar;
          else
            --n_similar;
          ++have;
          break;
        }
      }
    }
  };
  top_up(true);
  top_up(false);
  return batch;
}

double contrastive_pair_term(bool similar, double u, double v, double delta) {
  if (similar) return std::log(v * v / (u + delta) + 1.0);
  return std::log((u + delta) / (v * v + delta) + 1.0);
}

ContrastiveResult lga_contrastive_loss(const FeatureMap& f_in,
                                       const FeatureMap& f_out,
                                       const PatchSimilarity& sim,
                                       const PairBatch& pairs,
                                       DivergenceKind kind, double delta) {
  if (f_in.height != f_out.height || f_in.width != f_out.width)
    throw std::invalid_argument("lga_contrastive_loss: spatial shape mismatch");
  if (pairs.pairs.empty())
    throw std::invalid_argument("lga_contrastive_loss: empty pair batch");
  if (sim.node_count() != f_out.nodes())
    throw std::invalid_argument("lga_contrastive_loss: similarity node count mismatch");

  ContrastiveResult res;
  res.grad_f_out = FeatureMap(f_out.height, f_out.width, f_out.channels);
  const double inv_pairs = 1.0 / static_cast<double>(pairs.pairs.size());

  for (const auto& [i, j] : pairs.pairs) {
    const double u = node_divergence(f_in.node(i), f_in.node(j), kind);
    const double v = node_divergence(f_out.node(i), f_out.node(j), kind);
    const bool c = sim.similar(i, j);
    const double term = contrastive_pair_term(c, u, v, delta);
    if (!std::isfinite(term))
      throw std::runtime_error("lga_contrastive_loss: non-finite pair term");
    res.loss += term * inv_pairs;

    double dterm_dv;
    if (c) {
      dterm_dv = 2.0 * v / (v * v + u + delta);
    } else {
      // d/dV log((U + 2*delta + V^2) / (V^2 + delta))
      dterm_dv = 2.0 * v / (u + 2.0 * delta + v * v) -
                 2.0 * v / (v * v + delta);
    }
    node_divergence_backward(f_out.node(i), f_out.node(j), kind,
                             dterm_dv * inv_pairs, res.grad_f_out.node(i),
                             res.grad_f_out.node(j));
  }
  if (!res.grad_f_out.all_finite())
    throw std::runtime_error("lga_contrastive_loss: non-finite gradient");
  return res;
}

}  // namespace lga
