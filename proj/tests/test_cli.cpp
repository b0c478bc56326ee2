#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef LGA_CLI_PATH
#error "LGA_CLI_PATH must point at the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd =
      std::string(LGA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);                       // a subcommand is required
  CHECK(run("no-such-command") == 2);
  CHECK(run("cost --no-such-flag") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("cost table reports the published numbers") {
  TempDir dir("cli_cost_out");
  CHECK(run("cost --paper-config squeeze-lga --out-dir " + dir.str()) == 0);
  const std::string table = slurp(dir.path / "cost.txt");
  CHECK(table.find("params 132224") != std::string::npos);
  CHECK(table.find("flops 139921408") != std::string::npos);
  CHECK(fs::exists(dir.path / "resolved-config.txt"));

  CHECK(run("cost --paper-config ccnet --out-dir " + dir.str()) == 0);
  const std::string ccnet = slurp(dir.path / "cost.txt");
  CHECK(ccnet.find("params 2686976") != std::string::npos);
  CHECK(ccnet.find("flops 5577244672") != std::string::npos);

  CHECK(run("cost --paper-config bogus --out-dir " + dir.str()) == 2);
  // invalid custom config (groups do not divide channels) -> config error
  CHECK(run("cost --groups 3 --out-dir " + dir.str()) == 2);
}

TEST_CASE("gradcheck passes normally and fails at threshold zero") {
  TempDir dir("cli_grad_out");
  CHECK(run("gradcheck --instances 1 --out-dir " + dir.str()) == 0);
  CHECK(run("gradcheck --instances 1 --threshold 0 --out-dir " + dir.str()) ==
        1);
}

TEST_CASE("dump-graph writes a graph and honors LGA_SEED") {
  TempDir a("cli_graph_a"), b("cli_graph_b"), c("cli_graph_c");
  CHECK(run("dump-graph --seed 1 --out-dir " + a.str()) == 0);
  REQUIRE(fs::exists(a.path / "graph.json"));

  // the environment variable overrides --seed ...
  const std::string env_cmd = "LGA_SEED=2 " + std::string(LGA_CLI_PATH) +
                              " dump-graph --seed 1 --out-dir " + b.str() +
                              " > /dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
  CHECK(run("dump-graph --seed 2 --out-dir " + c.str()) == 0);

  // ... producing the same output as passing that seed directly
  CHECK(slurp(b.path / "graph.json") == slurp(c.path / "graph.json"));
  CHECK(slurp(a.path / "graph.json") != slurp(b.path / "graph.json"));
}

TEST_CASE("analytic bench is deterministic and reports exponents") {
  TempDir a("cli_bench_a"), b("cli_bench_b");
  CHECK(run("bench --mode analytic --out-dir " + a.str()) == 0);
  CHECK(run("bench --mode analytic --out-dir " + b.str()) == 0);
  const std::string csv = slurp(a.path / "bench.csv");
  CHECK(csv == slurp(b.path / "bench.csv"));
  CHECK(csv.find("model,mode,nodes,value") != std::string::npos);
  CHECK(csv.find("lga,analytic_exponent,0,1") != std::string::npos);
  CHECK(csv.find("crisscross,analytic_exponent,0,1.5") != std::string::npos);
  CHECK(csv.find("dense,analytic_exponent,0,2") != std::string::npos);
  CHECK(run("bench --mode nonsense --out-dir " + a.str()) == 2);
}

TEST_CASE("train writes per-epoch metrics deterministically") {
  TempDir a("cli_train_a"), b("cli_train_b");
  const std::string args =
      "train --train-count 4 --eval-count 2 --epochs 2 --pairs-per-step 8 "
      "--layers 1 --seed 3 --out-dir ";
  CHECK(run(args + a.str()) == 0);
  CHECK(run(args + b.str()) == 0);
  const std::string csv = slurp(a.path / "metrics.csv");
  CHECK(csv == slurp(b.path / "metrics.csv"));
  CHECK(csv.find("epoch,task_loss,contrastive_loss,pixel_accuracy,miou") !=
        std::string::npos);
  // header plus one row per epoch
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("ablate sweeps an axis into a csv") {
  TempDir dir("cli_ablate_out");
  CHECK(run("ablate --axis layers --values 0 1 "
            "--train-count 4 --eval-count 2 --epochs 1 --pairs-per-step 8 "
            "--out-dir " +
            dir.str()) == 0);
  const std::string csv = slurp(dir.path / "ablate.csv");
  CHECK(csv.find("layers,miou") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(run("ablate --axis bogus --train-count 4 --eval-count 2 --epochs 1 "
            "--out-dir " +
            dir.str()) == 2);
}

TEST_CASE("config files are applied strictly") {
  TempDir dir("cli_config_out");
  {
    std::ofstream os(dir.path / "good.toml");
    os << "[train]\n"
       << "epochs=1\ntrain-count=4\neval-count=2\npairs-per-step=8\n";
  }
  CHECK(run("--config " + (dir.path / "good.toml").string() +
            " train --out-dir " + dir.str()) == 0);
  const std::string snapshot = slurp(dir.path / "resolved-config.txt");
  CHECK(snapshot.find("command=train") != std::string::npos);
  CHECK(snapshot.find("epochs=1") != std::string::npos);

  {
    std::ofstream os(dir.path / "bad.toml");
    os << "[train]\n"
       << "epochs=1\nno-such-key=5\n";
  }
  CHECK(run("--config " + (dir.path / "bad.toml").string() +
            " train --out-dir " + dir.str()) == 2);
  CHECK(run("--config does_not_exist.toml train --out-dir " + dir.str()) == 2);
}
