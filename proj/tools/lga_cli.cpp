// Command-line front end: graph dumps, gradient checks, cost tables, scaling
// benchmarks, toy-task training and ablations.
//
// Exit codes: 0 success, 1 check/runtime failure, 2 usage or config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "lga/baselines.hpp"
#include "lga/cost.hpp"
#include "lga/loss.hpp"
#include "lga/module.hpp"
#include "lga/tensor.hpp"
#include "lga/toy.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string out_dir = "out";
  uint64_t seed = 1;
};

void add_common(CLI::App& cmd, CommonOpts& opts) {
  cmd.add_option("--out-dir", opts.out_dir, "Output directory")
      ->capture_default_str();
  cmd.add_option("--seed", opts.seed, "Random seed (LGA_SEED overrides)")
      ->capture_default_str();
}

// Every run leaves a machine-readable snapshot of the options it resolved to.
void write_snapshot(const CLI::App& cmd, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os(fs::path(out_dir) / "resolved-config.txt");
  os << "command=" << cmd.get_name() << "\n"
     << cmd.config_to_str(true, false);
  if (!os) throw std::runtime_error("cannot write resolved-config snapshot");
}

void apply_seed_env(CommonOpts& opts) {
  if (const char* env = std::getenv("LGA_SEED"))
    opts.seed = std::stoull(env);
}

lga::FeatureMap random_input(int h, int w, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lga::FeatureMap x(h, w, c);
  for (double& v : x.values) v = dist(rng);
  return x;
}

}  // namespace

using lga::FeatureMap;

namespace {

int run_dump_graph(const CommonOpts& opts, int height, int width, int channels,
                   double eps) {
  std::mt19937_64 rng(opts.seed);
  const lga::EdgeKernels kernels = lga::EdgeKernels::random(channels, rng);
  const FeatureMap x = random_input(height, width, channels, opts.seed + 1);
  const lga::EdgeMaps maps = lga::compute_edge_maps(x, kernels);
  const lga::LocalGraph graph =
      lga::normalize_adjacency(lga::assemble_adjacency(maps, height, width), eps);
  std::ofstream os(fs::path(opts.out_dir) / "graph.json");
  os << lga::graph_to_json(graph) << "\n";
  if (!os) throw std::runtime_error("cannot write graph.json");
  std::cout << "graph: " << graph.nodes() << " nodes, " << graph.entry_count()
            << " edges -> " << (fs::path(opts.out_dir) / "graph.json").string()
            << "\n";
  return 0;
}

// Finite-difference check of every parameter tensor against the analytic
// backward pass, on a small module with a contrastive term attached.
int run_gradcheck(const CommonOpts& opts, double threshold, int instances,
                  std::ostream& out) {
  bool all_ok = true;
  for (int inst = 0; inst < instances; ++inst) {
    const uint64_t seed = opts.seed + 1000ULL * inst;
    std::mt19937_64 rng(seed);
    const int h = 4, w = 5, c_in = 6, c_lga = 4, layers = 2;
    lga::LgaParams p = lga::LgaParams::random(c_in, c_lga, layers, 2, rng, 0.4);
    const FeatureMap f_in = random_input(h, w, c_in, seed + 1);
    const FeatureMap coeffs = random_input(h, w, c_in + c_lga, seed + 2);

    std::vector<int> labels(static_cast<size_t>(h) * w);
    std::uniform_int_distribution<int> cls(0, 2);
    for (int& l : labels) l = cls(rng);
    const auto sim = lga::build_similarity_classes(labels, h, w, h, w);
    const auto pairs = lga::sample_pairs(sim, 12, seed + 3);

    auto objective = [&](const lga::LgaParams& params) {
      const lga::LgaOutput o = lga::lga_forward(f_in, params, 1e-6);
      double j = 0.0;
      for (size_t k = 0; k < o.f_cat.values.size(); ++k)
        j += coeffs.values[k] * o.f_cat.values[k];
      j += lga::lga_contrastive_loss(f_in, o.f_out, sim, pairs,
                                     lga::DivergenceKind::Mse)
               .loss;
      return j;
    };

    const lga::LgaOutput o = lga::lga_forward(f_in, p, 1e-6);
    const auto contrastive = lga::lga_contrastive_loss(
        f_in, o.f_out, sim, pairs, lga::DivergenceKind::Mse);
    FeatureMap grad_cat = coeffs;
    for (int node = 0; node < grad_cat.nodes(); ++node) {
      auto g = grad_cat.node(node);
      auto go = contrastive.grad_f_out.node(node);
      for (int c = 0; c < c_lga; ++c) g[c_in + c] += go[c];
    }
    const lga::LgaGrads grads = lga::lga_backward(f_in, p, o, grad_cat);

    struct Row {
      std::string name;
      std::vector<double>* param;
      const std::vector<double>* grad;
    };
    std::vector<Row> rows;
    rows.push_back({"reducer", &p.input_reducer->weights,
                    &grads.grad_reducer->weights});
    for (int d = 0; d < lga::kNumDirections; ++d)
      rows.push_back({"edge_kernel_" + std::to_string(d),
                      &p.edge_kernels.kernels[d].weights,
                      &grads.grad_edge_kernels.kernels[d].weights});
    for (int i = 0; i < layers; ++i)
      rows.push_back({"transform_" + std::to_string(i),
                      &p.layer_transforms[i].weights,
                      &grads.grad_transforms[i].weights});

    const double step = 1e-5;
    for (const Row& row : rows) {
      double max_rel = 0.0;
      for (size_t k = 0; k < row.param->size(); ++k) {
        const double saved = (*row.param)[k];
        (*row.param)[k] = saved + step;
        const double jp = objective(p);
        (*row.param)[k] = saved - step;
        const double jm = objective(p);
        (*row.param)[k] = saved;
        const double fd = (jp - jm) / (2 * step);
        const double an = (*row.grad)[k];
        const double rel =
            std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
      const bool ok = max_rel < threshold;
      all_ok = all_ok && ok;
      out << (ok ? "PASS" : "FAIL") << " instance " << inst << " " << row.name
          << " max_rel_err=" << max_rel << "\n";
    }
  }
  out << (all_ok ? "gradcheck: all tensors passed\n"
                 : "gradcheck: FAILURES above threshold\n");
  return all_ok ? 0 : 1;
}

void print_cost(const std::string& name, const lga::CostReport& r,
                std::ostream& out) {
  out << name << ": params " << r.params_total << " (resize "
      << r.params_channel_resize << " + attention " << r.params_attention
      << "), flops " << r.flops_total << " (resize " << r.flops_channel_resize
      << " + info-prop " << r.flops_info_prop << " + other-conv "
      << r.flops_other_conv << ")\n";
}

int run_cost(const CommonOpts& opts, const std::string& preset,
             lga::LgaCostConfig custom) {
  std::ostringstream table;
  if (preset == "squeeze-lga") {
    print_cost(preset, lga::count_lga(lga::LgaCostConfig{}), table);
  } else if (preset == "squeeze-lga-small") {
    lga::LgaCostConfig cfg;
    cfg.groups = 8;
    print_cost(preset, lga::count_lga(cfg), table);
  } else if (preset == "ccnet") {
    print_cost(preset, lga::count_ccnet(lga::CcnetCostConfig{}), table);
  } else if (preset.empty()) {
    print_cost("custom", lga::count_lga(custom), table);
  } else {
    throw CLI::ValidationError("--paper-config",
                               "unknown preset '" + preset + "'");
  }
  std::cout << table.str();
  std::ofstream os(fs::path(opts.out_dir) / "cost.txt");
  os << table.str();
  if (!os) throw std::runtime_error("cannot write cost.txt");
  return 0;
}

int run_bench(const CommonOpts& opts, const std::string& mode,
              std::vector<int> sides, int channels, int runs) {
  const std::vector<std::string> models{"lga", "crisscross", "dense"};
  std::ofstream csv(fs::path(opts.out_dir) / "bench.csv");
  csv << "model,mode,nodes,value\n";
  for (const std::string& model : models) {
    std::vector<std::pair<double, double>> samples;
    if (mode == "analytic") {
      for (int side : sides) {
        const double n = static_cast<double>(side) * side;
        double cost;
        if (model == "lga")
          cost = lga::lga_attention_cost(n, channels);
        else if (model == "crisscross")
          cost = lga::ccnet_attention_cost(n, channels);
        else
          cost = lga::dense_attention_cost(n, channels);
        samples.emplace_back(n, cost);
        csv << model << ",analytic," << static_cast<long long>(n) << ","
            << cost << "\n";
      }
    } else if (mode == "empirical") {
      const auto bench =
          lga::run_scaling_benchmark(model, sides, channels, runs, 2, opts.seed);
      for (const auto& s : bench) {
        samples.emplace_back(static_cast<double>(s.nodes), s.wall_ns_median);
        csv << model << ",empirical," << s.nodes << "," << s.wall_ns_median
            << "\n";
      }
    } else {
      throw CLI::ValidationError("--mode", "expected analytic or empirical");
    }
    const lga::ScalingFit fit = lga::fit_scaling_exponent(samples);
    csv << model << "," << mode << "_exponent,0," << fit.exponent << "\n";
    std::cout << model << " " << mode << " exponent: " << fit.exponent << "\n";
  }
  if (!csv) throw std::runtime_error("cannot write bench.csv");
  return 0;
}

struct ToyOpts {
  int train_count = 48;
  int eval_count = 16;
  int cue_radius = 8;
  lga::ToyModelConfig model;
  lga::TrainConfig train;
};

void add_toy_options(CLI::App& cmd, ToyOpts& t) {
  cmd.add_option("--train-count", t.train_count)->capture_default_str();
  cmd.add_option("--eval-count", t.eval_count)->capture_default_str();
  cmd.add_option("--cue-radius", t.cue_radius)->capture_default_str();
  cmd.add_option("--layers", t.model.lga_layers)->capture_default_str();
  cmd.add_option("--groups", t.model.groups)->capture_default_str();
  cmd.add_option("--lga-init-scale", t.model.lga_init_scale)
      ->capture_default_str();
  cmd.add_flag("--no-lga", [&t](int64_t) { t.model.use_lga = false; },
               "Disable the graph-attention block");
  cmd.add_option("--epochs", t.train.epochs)->capture_default_str();
  cmd.add_option("--lr", t.train.lr)->capture_default_str();
  cmd.add_option("--lr-decay-epoch", t.train.lr_decay_epoch)
      ->capture_default_str();
  cmd.add_option("--lambda", t.train.lambda)->capture_default_str();
  cmd.add_option("--lambda-anneal-epochs", t.train.lambda_anneal_epochs)
      ->capture_default_str();
  cmd.add_flag("--no-divergence-loss",
               [&t](int64_t) { t.train.divergence_loss = false; },
               "Train without the contrastive term");
  cmd.add_option("--pairs-per-step", t.train.pairs_per_step)
      ->capture_default_str();
  cmd.add_option("--contrastive-delta", t.train.contrastive_delta)
      ->capture_default_str();
  cmd.add_option("--lga-channels", t.model.lga_channels)->capture_default_str();
  cmd.add_flag("--kl-divergence",
               [&t](int64_t) { t.train.divergence_kind = lga::DivergenceKind::Kl; },
               "Use KL instead of MSE inside the contrastive term");
}

int run_train(const CommonOpts& opts, const ToyOpts& t) {
  lga::TrainConfig tc = t.train;
  tc.seed = opts.seed;
  const auto train_data = lga::generate_dataset(
      t.train_count, t.model.height, t.model.width, opts.seed, t.cue_radius);
  const auto eval_data = lga::generate_dataset(
      t.eval_count, t.model.height, t.model.width, opts.seed + 7777,
      t.cue_radius);
  lga::ToyModel model = lga::ToyModel::random(t.model, opts.seed);
  const auto history = lga::train(model, train_data, eval_data, tc);
  lga::write_metrics_csv((fs::path(opts.out_dir) / "metrics.csv").string(),
                         history);
  const auto& last = history.back();
  std::cout << "final: task_loss=" << last.task_loss
            << " accuracy=" << last.pixel_accuracy << " miou=" << last.miou
            << "\n";
  return 0;
}

int run_ablate(const CommonOpts& opts, const ToyOpts& t, const std::string& axis,
               const std::vector<std::string>& values) {
  lga::TrainConfig tc = t.train;
  tc.seed = opts.seed;
  const auto train_data = lga::generate_dataset(
      t.train_count, t.model.height, t.model.width, opts.seed, t.cue_radius);
  const auto eval_data = lga::generate_dataset(
      t.eval_count, t.model.height, t.model.width, opts.seed + 7777,
      t.cue_radius);
  const auto rows =
      lga::ablate(axis, values, t.model, tc, train_data, eval_data);
  std::ofstream csv(fs::path(opts.out_dir) / "ablate.csv");
  csv << axis << ",miou\n";
  csv.precision(12);
  for (const auto& row : rows) {
    csv << row.value << "," << row.miou << "\n";
    std::cout << axis << "=" << row.value << " miou=" << row.miou << "\n";
  }
  if (!csv) throw std::runtime_error("cannot write ablate.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-graph attention reference toolkit"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);
  app.allow_config_extras(false);  // strict: unknown config keys are errors

  CommonOpts common;

  auto* dump = app.add_subcommand("dump-graph", "Dump a LocalGraph as JSON");
  add_common(*dump, common);
  int dg_h = 4, dg_w = 4, dg_c = 8;
  double dg_eps = 1e-6;
  dump->add_option("--height", dg_h)->capture_default_str();
  dump->add_option("--width", dg_w)->capture_default_str();
  dump->add_option("--channels", dg_c)->capture_default_str();
  dump->add_option("--eps", dg_eps)->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  add_common(*grad, common);
  double gc_threshold = 1e-4;
  int gc_instances = 3;
  grad->add_option("--threshold", gc_threshold)->capture_default_str();
  grad->add_option("--instances", gc_instances)->capture_default_str();

  auto* cost = app.add_subcommand("cost", "Analytic parameter/FLOP table");
  add_common(*cost, common);
  std::string preset;
  lga::LgaCostConfig custom;
  cost->add_option("--paper-config", preset,
                   "squeeze-lga | squeeze-lga-small | ccnet");
  cost->add_option("--c-in", custom.c_in)->capture_default_str();
  cost->add_option("--c-lga", custom.c_lga)->capture_default_str();
  cost->add_option("--groups", custom.groups)->capture_default_str();
  cost->add_option("--layers", custom.layers)->capture_default_str();
  cost->add_option("--height", custom.height)->capture_default_str();
  cost->add_option("--width", custom.width)->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Scaling benchmark + exponent fit");
  add_common(*bench, common);
  std::string bench_mode = "analytic";
  std::vector<int> bench_sides{16, 32, 64, 128};
  int bench_channels = 32, bench_runs = 11;
  bench->add_option("--mode", bench_mode, "analytic | empirical")
      ->capture_default_str();
  bench->add_option("--grid-sides", bench_sides)->capture_default_str();
  bench->add_option("--channels", bench_channels)->capture_default_str();
  bench->add_option("--runs", bench_runs)->capture_default_str();

  ToyOpts toy;
  auto* train = app.add_subcommand("train", "Train on the distant-cue task");
  add_common(*train, common);
  add_toy_options(*train, toy);

  auto* ablate = app.add_subcommand("ablate", "Sweep one axis, one run per value");
  add_common(*ablate, common);
  add_toy_options(*ablate, toy);
  std::string ab_axis = "layers";
  std::vector<std::string> ab_values{"0", "1", "2", "4"};
  ablate->add_option("--axis", ab_axis, "layers | divergence_loss | groups")
      ->capture_default_str();
  ablate->add_option("--values", ab_values)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_seed_env(common);
    CLI::App* cmd = app.get_subcommands().front();
    write_snapshot(*cmd, common.out_dir);
    if (cmd == dump)
      return run_dump_graph(common, dg_h, dg_w, dg_c, dg_eps);
    if (cmd == grad)
      return run_gradcheck(common, gc_threshold, gc_instances, std::cout);
    if (cmd == cost) return run_cost(common, preset, custom);
    if (cmd == bench)
      return run_bench(common, bench_mode, bench_sides, bench_channels,
                       bench_runs);
    if (cmd == train) return run_train(common, toy);
    if (cmd == ablate) return run_ablate(common, toy, ab_axis, ab_values);
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
