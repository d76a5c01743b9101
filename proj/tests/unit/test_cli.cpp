#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fcnpose/errors.hpp"
#include "fcnpose/network.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using fcnpose::cli::run;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("fcnpose_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fcnpose");
    return run(args);
  }

  void make_dataset(const std::string& name, int n = 10) {
    ASSERT_EQ(cli({"dataset", "gen", "--n", std::to_string(n), "--resolution", "32", "--seed", "3", "--out", path(name)}),
              0);
  }

  static std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path root_;
};

}  // namespace

TEST(CliParse, Rates) {
  EXPECT_EQ(fcnpose::cli::parse_rates("30,50,0.7"), (std::vector<double>{0.3, 0.5, 0.7}));
  EXPECT_EQ(fcnpose::cli::parse_rates("0"), (std::vector<double>{0.0}));
  EXPECT_THROW(fcnpose::cli::parse_rates("abc"), fcnpose::ContractViolation);
  EXPECT_THROW(fcnpose::cli::parse_rates("100"), fcnpose::ContractViolation);
  EXPECT_THROW(fcnpose::cli::parse_rates(""), fcnpose::ContractViolation);
}

TEST(CliParse, Resolution) {
  EXPECT_EQ(fcnpose::cli::parse_resolution("64"), (std::pair<std::size_t, std::size_t>{64, 64}));
  EXPECT_EQ(fcnpose::cli::parse_resolution("64x96"), (std::pair<std::size_t, std::size_t>{64, 96}));
  EXPECT_THROW(fcnpose::cli::parse_resolution("64x"), fcnpose::ContractViolation);
}

TEST_F(CliTest, ExitCodesByCategory) {
  EXPECT_EQ(cli({"train", "--bogus"}), fcnpose::cli::kExitConfig);
  EXPECT_EQ(cli({"dataset", "gen", "--resolution", "100", "--out", path("bad")}), fcnpose::cli::kExitConfig);
  EXPECT_EQ(cli({"eval", "--model", path("missing.fcnp"), "--data", path("none"), "--out", path("e")}),
            fcnpose::cli::kExitIo);
  {
    std::ofstream(path("corrupt.fcnp")) << "garbage";
  }
  make_dataset("ds");
  EXPECT_EQ(cli({"eval", "--model", path("corrupt.fcnp"), "--data", path("ds"), "--out", path("e2")}),
            fcnpose::cli::kExitData);
}

TEST_F(CliTest, RefusesToOverwriteAndWritesRunConfig) {
  make_dataset("ds");
  EXPECT_EQ(cli({"dataset", "gen", "--n", "10", "--out", path("ds")}), fcnpose::cli::kExitIo);
  const auto config = nlohmann::json::parse(slurp(path("ds/run_config.json")));
  EXPECT_EQ(config["command"], "dataset gen");
  EXPECT_EQ(config["seed"], 3);
  EXPECT_EQ(config["resolution"], "32");
  // Re-running from the resolved config reproduces the outputs.
  ASSERT_EQ(cli({"dataset", "gen", "--config", path("ds/run_config.json"), "--out", path("ds2")}), 0);
  EXPECT_EQ(slurp(path("ds/train.json")), slurp(path("ds2/train.json")));
  EXPECT_EQ(slurp(path("ds/train_00000.ppm")), slurp(path("ds2/train_00000.ppm")));
}

TEST_F(CliTest, TrainIsDeterministicAndQuantizeIsIdempotent) {
  make_dataset("ds");
  ASSERT_EQ(cli({"train", "--data", path("ds"), "--epochs", "1", "--seed", "7", "--out", path("t1")}), 0);
  ASSERT_EQ(cli({"train", "--data", path("ds"), "--epochs", "1", "--seed", "7", "--out", path("t2")}), 0);
  EXPECT_EQ(slurp(path("t1/model.fcnp")), slurp(path("t2/model.fcnp")));
  EXPECT_TRUE(fs::exists(path("t1/history.csv")));

  ASSERT_EQ(cli({"prune", "--model", path("t1/model.fcnp"), "--rate", "70", "--out", path("p")}), 0);
  EXPECT_EQ(fcnpose::count_params(fcnpose::load_model(path("p/model.fcnp")).spec), 14668u);
  EXPECT_TRUE(fs::exists(path("p/plan.json")));
  ASSERT_EQ(cli({"quantize", "--model", path("p/model.fcnp"), "--out", path("q")}), 0);
  ASSERT_EQ(cli({"quantize", "--model", path("q/model.fcnp"), "--out", path("q2")}), 0);
  EXPECT_EQ(slurp(path("q/model.fcnp")), slurp(path("q2/model.fcnp")));
  EXPECT_EQ(fcnpose::load_model(path("q/model.fcnp")).weights.dtype, fcnpose::DType::fp16);

  ASSERT_EQ(cli({"train", "--data", path("ds"), "--epochs", "1", "--init", path("p/model.fcnp"), "--out",
                 path("rt")}),
            0);
  EXPECT_EQ(fcnpose::count_params(fcnpose::load_model(path("rt/model.fcnp")).spec), 14668u);

  ASSERT_EQ(cli({"eval", "--model", path("q/model.fcnp"), "--data", path("ds"), "--out", path("e")}), 0);
  const auto metrics = nlohmann::json::parse(slurp(path("e/metrics.json")));
  EXPECT_GE(metrics["pck_mean"].get<double>(), 0.0);
  EXPECT_EQ(nlohmann::json::parse(slurp(path("e/predictions.json"))).size(), 2u);

  ASSERT_EQ(cli({"bench", "--model", path("q/model.fcnp"), "--reps", "3", "--resolution", "32", "--out", path("b")}),
            0);
  const auto bench = nlohmann::json::parse(slurp(path("b/bench.json")));
  EXPECT_EQ(bench["params"], 14668);
  EXPECT_GT(bench["fps_infer"].get<double>(), 0.0);
}

TEST_F(CliTest, SweepEmitsPruningTableParams) {
  make_dataset("ds", 6);
  ASSERT_EQ(cli({"sweep", "--data", path("ds"), "--rates", "30,40,50,60,70,80,90", "--epochs", "1",
                 "--retrain-epochs", "1", "--reps", "2", "--warmup", "1", "--out", path("s")}),
            0);
  std::istringstream csv(slurp(path("s/sweep.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "rate,pck_mean,pck_std,infer_ms_mean,infer_ms_std,fps_infer,fps_total,params,flops,size_bytes");
  const std::size_t expected[] = {68014, 51264, 35185, 24209, 14668, 7206, 2480};
  for (std::size_t want : expected) {
    ASSERT_TRUE(std::getline(csv, line));
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 10u);
    EXPECT_EQ(std::stoul(cells[7]), want);
  }
  EXPECT_TRUE(fs::exists(path("s/sweep.svg")));
  EXPECT_TRUE(fs::exists(path("s/baseline.fcnp")));
  EXPECT_TRUE(fs::exists(path("s/model_70.fcnp")));
  EXPECT_TRUE(fs::exists(path("s/run_config.json")));
}
