#include "ploff/bonus_index.hpp"
#include "ploff/container.hpp"
#include "ploff/dataset.hpp"
#include "ploff/metric_approx.hpp"

#include "json.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace ploff;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path work_dir() {
  // One directory per process; ctest runs each case separately. Leaked so the
  // exit hook can still read it after static destructors.
  static const fs::path* dir = [] {
    auto* d = new fs::path(fs::temp_directory_path() / ("ploff_test_cli_" + std::to_string(::getpid())));
    fs::remove_all(*d);
    fs::create_directories(*d);
    std::atexit([] {
      std::error_code ec;
      fs::remove_all(*dir, ec);
    });
    return d;
  }();
  return *dir;
}

std::string w(const std::string& name) { return (work_dir() / name).string(); }

Run cli(const std::string& args) {
  const std::string log = w("last_output.txt");
  const std::string cmd = std::string("\"") + PLOFF_CLI_PATH + "\" " + args + " > \"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_file(log);
  return r;
}

std::string map_path() { return std::string(PLOFF_SOURCE_DIR) + "/assets/two_room.txt"; }

int csv_rows(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  int rows = -1;  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  return rows;
}

// Small point-mass pipeline shared by several tests.
void ensure_pointmass_artifacts() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(cli("gen-data --env pointmass --policy medium --episodes 5 --seed 0 -o " + w("pm.plds")).code, 0);
  ASSERT_EQ(cli("train-metric --data " + w("pm.plds") +
                " --steps 2000 --log-every 1000 --hidden 32 --embed 8 --batch 32 --n-action-samples 4 -o " +
                w("pm_metric.plck"))
                .code,
            0);
  ASSERT_EQ(cli("build-knn --data " + w("pm.plds") + " --metric " + w("pm_metric.plck") + " --k 10 -o " +
                w("pm_index.plnn"))
                .code,
            0);
  ASSERT_EQ(cli("build-knn --data " + w("pm.plds") + " --euclidean --k 5 -o " + w("pm_l2.plnn")).code, 0);
  done = true;
}

}  // namespace

TEST(GenData, GridworldQLearning) {
  auto r = cli("gen-data --env gridworld --map " + map_path() +
               " --episodes 500 --epsilon 0.1 --gamma 0.99 --seed 0 -o " + w("grid.plds"));
  ASSERT_EQ(r.code, 0) << r.out;
  auto d = data::load_dataset(w("grid.plds"));
  EXPECT_LE(d.n(), 25000u);
  EXPECT_GT(d.n(), 0u);
  EXPECT_TRUE(d.scaled);
}

TEST(GenData, PointmassSizeAndDeterminism) {
  ASSERT_EQ(cli("gen-data --env pointmass --policy medium --episodes 100 --seed 3 -o " + w("a.plds")).code, 0);
  ASSERT_EQ(cli("gen-data --env pointmass --policy medium --episodes 100 --seed 3 -o " + w("b.plds")).code, 0);
  EXPECT_EQ(data::load_dataset(w("a.plds")).n(), 100u * 100u);
  EXPECT_EQ(io::read_file(w("a.plds")), io::read_file(w("b.plds")));
  ASSERT_EQ(cli("gen-data --env pointmass --policy medium --episodes 100 --seed 4 -o " + w("c.plds")).code, 0);
  EXPECT_NE(io::read_file(w("a.plds")), io::read_file(w("c.plds")));
}

TEST(ExitCodes, ValidationErrors) {
  EXPECT_EQ(cli("gen-data --env cartpole -o " + w("x.plds")).code, 1);
  EXPECT_EQ(cli("gen-data --env gridworld --map " + w("missing.txt")).code, 1);
  EXPECT_EQ(cli("train-metric --data " + w("missing.plds")).code, 1);
  EXPECT_EQ(cli("train-metric").code, 1);  // required flag
  EXPECT_EQ(cli("gen-data --episodes notanumber").code, 1);
  io::write_file(w("garbage.plds"), "PLDS9 not a dataset");
  auto r = cli("train-metric --data " + w("garbage.plds"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST(ExitCodes, DivergenceIsNumericalFailure) {
  ensure_pointmass_artifacts();
  auto r = cli("train-agent --data " + w("pm.plds") +
               " --variant td3-off --steps 3000 --batch 16 --hidden 16,16 --lr 50 -o " + w("blowup.plck"));
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST(TrainMetric, ZeroStepsWritesInitialEmbedders) {
  ensure_pointmass_artifacts();
  ASSERT_EQ(cli("train-metric --data " + w("pm.plds") + " --steps 0 --hidden 16 --embed 4 --seed 7 -o " +
                w("zero.plck"))
                .code,
            0);
  auto loaded = approx::load_metric(w("zero.plck"));
  auto space = approx::ActionSpace::box(Eigen::VectorXd::Constant(2, -1), Eigen::VectorXd::Constant(2, 1));
  auto init = approx::init_embedders(4, 2, space, {16, 4}, 7);
  ASSERT_EQ(loaded.phi.layers.size(), init.phi.layers.size());
  for (std::size_t l = 0; l < init.phi.layers.size(); ++l) {
    // Stored as float32.
    EXPECT_LE((loaded.phi.layers[l].weight - init.phi.layers[l].weight).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LE((loaded.psi.layers[l].weight - init.psi.layers[l].weight).cwiseAbs().maxCoeff(), 1e-7);
  }
  EXPECT_EQ(csv_rows(w("zero.loss.csv")), 0);
}

TEST(TrainMetric, LossCsvRows) {
  ensure_pointmass_artifacts();
  EXPECT_EQ(csv_rows(w("pm_metric.loss.csv")), 2);
}

TEST(BuildKnn, ListsAndDeterminism) {
  ensure_pointmass_artifacts();
  ASSERT_EQ(cli("build-knn --data " + w("pm.plds") + " --metric " + w("pm_metric.plck") + " --k 10 -o " +
                w("again.plnn"))
                .code,
            0);
  EXPECT_EQ(io::read_file(w("pm_index.plnn")), io::read_file(w("again.plnn")));

  ASSERT_EQ(cli("build-knn --data " + w("pm.plds") + " --metric " + w("pm_metric.plck") + " --k 1000 -o " +
                w("all.plnn"))
                .code,
            0);
  auto metric = approx::load_metric(w("pm_metric.plck"));
  auto idx = bonus::load_index(w("all.plnn"), &metric);
  EXPECT_EQ(idx.list_size(), 500u);
  EXPECT_EQ(idx.candidates(0).size(), 500u);

  // Same metric and dataset, rebuilt in-process: identical lists.
  auto d = data::load_dataset(w("pm.plds"));
  auto direct = bonus::build_neighbor_index(metric, d, 10);
  auto small = bonus::load_index(w("pm_index.plnn"), &metric);
  EXPECT_EQ(direct.neighbors, small.neighbors);

  ASSERT_EQ(cli("gen-data --env pointmass --policy expert --episodes 5 -o " + w("expert.plds")).code, 0);
  ASSERT_EQ(cli("train-metric --data " + w("expert.plds") + " --steps 0 --hidden 8 --embed 4 -o " + w("expert_metric.plck")).code, 0);
  EXPECT_EQ(cli("build-knn --data " + w("pm.plds") + " --metric " + w("expert_metric.plck") + " -o " + w("x.plnn")).code, 1)
      << "metric trained on another dataset must be rejected";
}

TEST(TrainAgent, VariantsEvalAndMismatches) {
  ensure_pointmass_artifacts();
  const std::string base = "train-agent --data " + w("pm.plds") + " --steps 40 --batch 16 --hidden 16,16 --log-every 10";
  auto r = cli(base + " --variant td3-off -o " + w("td3.plck"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(csv_rows(w("td3.log.csv")), 4);
  {
    std::ifstream in(w("td3.log.csv"));
    std::string header, row;
    std::getline(in, header);
    while (std::getline(in, row)) EXPECT_EQ(row.substr(row.rfind(',') + 1), "0") << row;
  }

  r = cli(base + " --variant ploff --form exp --alpha-a 5 --alpha-c 1 --beta 0.5 --metric " + w("pm_metric.plck") +
          " --index " + w("pm_index.plnn") + " -o " + w("ploff.plck"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli(base + " --variant ploff-l2 --form exp --index " + w("pm_l2.plnn") + " -o " + w("l2.plck"));
  ASSERT_EQ(r.code, 0) << r.out;

  // Index of the wrong kind, and an index built for another dataset.
  EXPECT_EQ(cli(base + " --variant ploff-l2 --index " + w("pm_index.plnn") + " --metric " + w("pm_metric.plck") +
                " -o " + w("x.plck"))
                .code,
            1);
  ASSERT_EQ(cli("gen-data --env pointmass --policy random --episodes 5 --seed 1 -o " + w("other.plds")).code, 0);
  EXPECT_EQ(cli("train-agent --data " + w("other.plds") + " --steps 5 --variant ploff --metric " +
                w("pm_metric.plck") + " --index " + w("pm_index.plnn") + " -o " + w("x.plck"))
                .code,
            1);

  r = cli("eval --agent " + w("ploff.plck") + " --episodes 10 -o " + w("eval.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  auto report = nlohmann::json::parse(io::read_file(w("eval.json")));
  EXPECT_EQ(report.at("std").get<double>(), 0.0);
  EXPECT_EQ(report.at("returns").size(), 10u);
  EXPECT_TRUE(report.contains("mean"));
  EXPECT_TRUE(report.contains("normalized"));
  EXPECT_EQ(cli("eval --agent " + w("pm_metric.plck")).code, 1);
}

TEST(Sweep, WritesGridTable) {
  ensure_pointmass_artifacts();
  auto r = cli("sweep --data " + w("pm.plds") + " --variant ploff --form exp --metric " + w("pm_metric.plck") +
               " --index " + w("pm_index.plnn") +
               " --steps 4 --batch 8 --hidden 8,8 --alpha-a-grid 1,5 --alpha-c-grid 1 --beta-grid 0.1,0.5"
               " --seeds 0,1 --eval-episodes 1 -o " + w("sweep.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(csv_rows(w("sweep.csv")), 8);
}

TEST(ExportFigures, HeatmapNoiseCurves) {
  ASSERT_EQ(cli("gen-data --env gridworld --map " + map_path() + " --episodes 500 --seed 0 -o " + w("g.plds")).code, 0);
  ASSERT_EQ(cli("train-metric --data " + w("g.plds") + " --steps 300 --hidden 16 --embed 4 --batch 16 --log-every 100 -o " +
                w("g_metric.plck"))
                .code,
            0);
  auto r = cli("export-figures --what heatmap --data " + w("g.plds") + " --metric " + w("g_metric.plck") +
               " --anchor goal -o " + w("heat.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(w("heat.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,col,distance");
  int cells = 0;
  bool saw_goal = false;
  while (std::getline(in, line)) {
    ++cells;
    if (line.rfind("6,10,", 0) == 0) {
      saw_goal = true;
      EXPECT_EQ(std::stod(line.substr(5)), 0.0);
    }
  }
  EXPECT_TRUE(saw_goal);
  EXPECT_EQ(cells, 7 * 11 - 6);  // walkable cells: interior minus the wall column's blocked cells

  EXPECT_EQ(cli("export-figures --what heatmap --data " + w("g.plds") + " --metric " + w("g_metric.plck") +
                " --anchor 40,2 -o " + w("bad.csv"))
                .code,
            1);
  EXPECT_EQ(cli("export-figures --what heatmap --data " + w("g.plds") + " --metric " + w("g_metric.plck") +
                " --anchor 0,0 -o " + w("bad.csv"))
                .code,
            1);

  r = cli("export-figures --what noise --data " + w("g.plds") + " --metric " + w("g_metric.plck") +
          " --lambdas 0,0.1,0.4 --samples 50 -o " + w("noise.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream noise(w("noise.csv"));
  std::getline(noise, line);
  EXPECT_EQ(line, "lambda,kind,mean,q10,q50,q90");
  int zero_rows = 0;
  while (std::getline(noise, line)) {
    if (line.rfind("0,", 0) == 0) {
      ++zero_rows;
      EXPECT_EQ(line.substr(line.find(',', 2)), ",0,0,0,0") << line;
    }
  }
  EXPECT_EQ(zero_rows, 2);

  ASSERT_EQ(cli("export-figures --what curves --loss-csv " + w("g_metric.loss.csv") + " -o " + w("curves.csv")).code, 0);
  EXPECT_EQ(io::read_file(w("curves.csv")), io::read_file(w("g_metric.loss.csv")));
  EXPECT_EQ(cli("export-figures --what pie -o " + w("pie.csv")).code, 1);
}

TEST(Verify, FreshRunAndInjectedViolation) {
  auto r = cli("verify --trials 10 --sampled-seeds 2 --json " + w("verify.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS "), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL "), std::string::npos);
  auto report = nlohmann::json::parse(io::read_file(w("verify.json")));
  EXPECT_TRUE(report.at("ok").get<bool>());
  ASSERT_GE(report.at("suites").size(), 7u);
  for (const auto& suite : report.at("suites")) {
    EXPECT_GT(suite.at("passed").get<int>(), 0) << suite.at("suite");
    EXPECT_EQ(suite.at("failed").get<int>(), 0) << suite.at("suite");
  }

  io::write_file(w("triangle.csv"), "0,1,5\n1,0,1\n5,1,0\n");
  r = cli("verify --trials 10 --sampled-seeds 2 --check-metric " + w("triangle.csv"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("FAIL "), std::string::npos) << r.out;
}
