// End-to-end runs of the command-line tool.

#include "isinglab/isinglab.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace isinglab;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("isinglab_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!HasFailure()) fs::remove_all(dir_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(ISINGLAB_CLI_PATH) + " " + args + " > " +
                            path("stdout.txt") + " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenIsDeterministicAndValidates) {
  ASSERT_EQ(run("gen --L 12 --g 0.4 --k 0.5 --seed 9 --out " + path("a.json")), 0);
  ASSERT_EQ(run("gen --L 12 --g 0.4 --k 0.5 --seed 9 --out " + path("b.json")), 0);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
  EXPECT_TRUE(fs::exists(path("a.json.manifest.json")));

  ASSERT_EQ(run("gen --L 6 --g 0.3 --k 0 --seed 1 --out " + path("sym.json")), 0);
  CouplingModel sym = model_from_json(read_json_file(path("sym.json")));
  EXPECT_TRUE(sym.is_symmetric(0.0));

  EXPECT_EQ(run("gen --L 4 --g -1 --out " + path("bad.json")), 2);
  EXPECT_EQ(run("gen --L 0 --g 0.3 --out " + path("bad.json")), 2);
  EXPECT_EQ(run("gen --L 4 --g 0.3"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
}

TEST_F(Cli, SimulateInferEvaluate) {
  ASSERT_EQ(run("gen --L 8 --g 0.3 --k 1 --seed 3 --out " + path("model.json")), 0);
  ASSERT_EQ(run("simulate --model " + path("model.json") + " --updates 300000 --seed 4 --out " +
                path("traj.bin")),
            0);
  for (const std::string method : {"asyn-nmf", "asyn-tap", "sho"}) {
    const std::string est = path(method + ".json");
    ASSERT_EQ(run("infer --method " + method + " --trajectory " + path("traj.bin") +
                  " --burn-in 50 --out " + est),
              0)
        << method;
    ASSERT_EQ(run("eval --truth " + path("model.json") + " --estimate " + est + " --out " +
                  path("rep.json")),
              0);
    EXPECT_GT(read_json_file(path("rep.json")).at("pearson").get<double>(), 0.9) << method;
  }

  ASSERT_EQ(run("eval --truth " + path("model.json") + " --estimate " + path("model.json") +
                " --out " + path("self.json")),
            0);
  auto self = read_json_file(path("self.json"));
  EXPECT_EQ(self.at("mse").get<double>(), 0.0);
  EXPECT_EQ(self.at("q_similarity").get<double>(), 1.0);
}

TEST_F(Cli, SamplesAndEquilibriumMethods) {
  ASSERT_EQ(run("gen --L 6 --g 0.3 --k 0 --seed 5 --out " + path("model.json")), 0);
  ASSERT_EQ(run("sample --model " + path("model.json") + " --out " +
                path("samples.txt")),
            0);
  ASSERT_EQ(run("moments --samples " + path("samples.txt") + " --out " + path("mom.json")), 0);
  MomentSet mom = moments_from_json(read_json_file(path("mom.json")));
  EXPECT_EQ(mom.L, 6);
  for (const std::string method : {"nmf", "tap", "plm"}) {
    ASSERT_EQ(run("infer --method " + method + " --samples " + path("samples.txt") + " --out " +
                  path("est.json")),
              0)
        << method;
    InferenceResult r = result_from_json(read_json_file(path("est.json")));
    CouplingModel truth = model_from_json(read_json_file(path("model.json")));
    EXPECT_GT(pearson(truth.J, r.J), 0.9) << method;
  }
}

TEST_F(Cli, SingularMomentsExitWithDiagnostics) {
  write_file(path("sing.json"),
             R"({"L":3,"m":[0,0,0],"c0":[[1,1,1],[1,1,1],[1,1,1]]})");
  EXPECT_EQ(run("infer --method nmf --moments " + path("sing.json") + " --out " + path("e.json")),
            3);
  auto diag = read_json_file(path("e.json.diagnostics.json"));
  EXPECT_TRUE(diag.contains("condition_number"));
  EXPECT_EQ(diag.at("kind"), "numerical");
}

TEST_F(Cli, ReplayReproducesOutput) {
  ASSERT_EQ(run("gen --L 6 --g 0.4 --k 1 --seed 7 --out " + path("model.json")), 0);
  ASSERT_EQ(run("simulate --model " + path("model.json") + " --updates 20000 --seed 8 --out " +
                path("traj.bin")),
            0);
  const std::string first = read_file(path("traj.bin"));
  auto manifest = read_json_file(path("traj.bin.manifest.json"));
  EXPECT_EQ(manifest.at("command"), nlohmann::json::array({"simulate"}));
  fs::remove(path("traj.bin"));
  ASSERT_EQ(run("replay " + path("traj.bin.manifest.json")), 0);
  EXPECT_EQ(read_file(path("traj.bin")), first);
}

TEST_F(Cli, SpikeBinarization) {
  write_file(path("spikes.csv"), "unit_id,time_s\n0,1.0\n1,0.5\n1,1.5\n");
  ASSERT_EQ(run("binarize spikes --input " + path("spikes.csv") +
                " --gamma 100 --dt 0.0005 --length 2 --seed 3 --out " + path("grid.bin")),
            0);
  std::ifstream in(path("grid.bin"), std::ios::binary);
  SpinGrid g = read_grid(in);
  EXPECT_EQ(g.L, 2);
  EXPECT_EQ(g.n_cells, 4000u);
  EXPECT_EQ(g.at(2000, 0), 1);
  EXPECT_EQ(g.at(0, 0), -1);
  ASSERT_EQ(run("moments --grid " + path("grid.bin") + " --gamma 100 --out " + path("m.json")), 0);
}

TEST_F(Cli, PopgenEvolveAndInfer) {
  ASSERT_EQ(run("popgen evolve --preset recovery --L 8 --N 200 --T 100 --seed 2 --out " +
                path("snaps.txt")),
            0);
  ASSERT_EQ(run("popgen infer --snapshots " + path("snaps.txt") + " --out " + path("f.json")), 0);
  InferenceResult r = result_from_json(read_json_file(path("f.json")));
  EXPECT_EQ(r.J.rows(), 8);
  EXPECT_TRUE(r.J.diagonal().isZero(0.0));
}
