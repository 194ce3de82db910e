// Runs the crowdalloc executable end to end.

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int status = -1;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string command = std::string(CROWDALLOC_CLI) + " " + args + " 2>&1";
  CommandResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (pipe == nullptr) {
    return result;
  }
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) {
    result.output += buf;
  }
  const int raw = pclose(pipe);
  result.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("crowdalloc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& text) {
    const fs::path path = dir_ / "test.conf";
    std::ofstream(path) << text;
    return path;
  }

  fs::path dir_;
};

const char* kSmallConfig =
    "jobs = 300\n"
    "epsilon = 0.3310282\n"
    "seed = 5\n"
    "group = 8, 10:50, 50:75, 30:35\n"
    "group = 4, 100, 100, 25\n";

}  // namespace

TEST_F(CliTest, SimulateWritesTracesAndSummary) {
  const auto config = write_config(kSmallConfig);
  const auto out = dir_ / "run";
  const auto res = run_cli("simulate --config " + config.string() + " --out " + out.string() +
                           " --replicates 3 --parallelism 2 --payments");
  ASSERT_EQ(res.status, 0) << res.output;
  for (const char* name : {"trace_rep000.csv", "trace_rep002.csv", "estimator_rep001.csv", "population_rep000.csv",
                           "payments_rep000.csv", "summary.json"}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }

  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  ASSERT_EQ(summary["replicate_summaries"].size(), 3u);
  double payment_sum = 0.0;
  for (int r = 0; r < 3; ++r) {
    const auto& rep = summary["replicate_summaries"][r];
    EXPECT_EQ(rep["seed"], 5 + r);
    payment_sum += rep["payment_total"].get<double>();

    // The last CSV row carries the replicate's totals.
    std::istringstream csv(slurp(out / ("trace_rep00" + std::to_string(r) + ".csv")));
    std::string line;
    std::string last;
    while (std::getline(csv, line)) {
      last = line;
    }
    std::istringstream fields(last);
    std::string t, welfare, payment;
    std::getline(fields, t, ',');
    std::getline(fields, welfare, ',');
    std::getline(fields, payment, ',');
    EXPECT_EQ(std::stol(t), 300);
    EXPECT_EQ(std::stod(welfare), rep["neg_social_welfare_total"].get<double>());
    EXPECT_EQ(std::stod(payment), rep["payment_total"].get<double>());
  }
  EXPECT_DOUBLE_EQ(summary["aggregate"]["payment_total"].get<double>(), payment_sum);
  EXPECT_EQ(summary["aggregate"]["jobs_completed"], 900);
}

TEST_F(CliTest, SimulateIsByteReproducibleAcrossParallelism) {
  const auto config = write_config(kSmallConfig);
  const auto a = dir_ / "a";
  const auto b = dir_ / "b";
  ASSERT_EQ(run_cli("simulate --config " + config.string() + " --out " + a.string() + " --replicates 3").status, 0);
  ASSERT_EQ(run_cli("simulate --config " + config.string() + " --out " + b.string() +
                    " --replicates 3 --parallelism 3")
                .status,
            0);
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
  }
}

TEST_F(CliTest, KnownMeansModeHasZeroRegret) {
  const auto config = write_config(kSmallConfig);
  const auto out = dir_ / "km";
  ASSERT_EQ(run_cli("simulate --config " + config.string() + " --out " + out.string() + " --mode known-means").status,
            0);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["aggregate"]["regret_total"].get<double>(), 0.0);
  EXPECT_EQ(summary["replicate_summaries"][0]["first_optimal_match"], 1);
}

TEST_F(CliTest, DeskConfigRuns) {
  const auto out = dir_ / "desk";
  const auto res = run_cli(std::string("simulate --config ") + CROWDALLOC_CONFIG_DIR + "/desk_40.conf --out " +
                           out.string());
  EXPECT_EQ(res.status, 0) << res.output;
  EXPECT_TRUE(fs::exists(out / "trace_rep000.csv"));
}

TEST_F(CliTest, DsicTestReportsGain) {
  const auto res = run_cli("dsic-test --instances 200 --out " + (dir_ / "dsic").string());
  ASSERT_EQ(res.status, 0) << res.output;
  const auto report = nlohmann::json::parse(slurp(dir_ / "dsic" / "dsic.json"));
  EXPECT_EQ(report["instances"], 200);
  EXPECT_LE(report["max_gain"].get<double>(), 1e-9);
  EXPECT_TRUE(report["passed"].get<bool>());
}

TEST_F(CliTest, SweepWritesOneDirectoryPerValue) {
  const auto config = write_config(kSmallConfig);
  const auto out = dir_ / "sweep";
  const auto res = run_cli("sweep --config " + config.string() + " --out " + out.string() +
                           " --key delta --values 0.2,0.5");
  ASSERT_EQ(res.status, 0) << res.output;
  EXPECT_TRUE(fs::exists(out / "delta=0.2" / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "delta=0.5" / "summary.json"));
  const auto index = nlohmann::json::parse(slurp(out / "sweep.json"));
  EXPECT_EQ(index["points"].size(), 2u);
  const auto point = nlohmann::json::parse(slurp(out / "delta=0.2" / "summary.json"));
  EXPECT_EQ(point["market"]["delta"], 0.2);
}

TEST_F(CliTest, MissingConfigExitsThreeNamingPath) {
  const auto res = run_cli("simulate --config /no/such/file.conf --out " + (dir_ / "x").string());
  EXPECT_EQ(res.status, 3);
  EXPECT_NE(res.output.find("/no/such/file.conf"), std::string::npos) << res.output;
}

TEST_F(CliTest, InvalidConfigExitsThree) {
  const auto config = write_config("workers = 3\nepsilon = 1.5\n");
  EXPECT_EQ(run_cli("simulate --config " + config.string() + " --out " + (dir_ / "x").string()).status, 3);
  const auto sweep_cfg = write_config(kSmallConfig);
  EXPECT_EQ(run_cli("sweep --config " + sweep_cfg.string() + " --out " + (dir_ / "y").string() +
                    " --key delta --values 40")
                .status,
            3);
}

TEST_F(CliTest, BadArgumentsExitTwo) {
  EXPECT_EQ(run_cli("").status, 2);
  EXPECT_EQ(run_cli("frobnicate").status, 2);
  const auto config = write_config(kSmallConfig);
  EXPECT_EQ(run_cli("simulate --config " + config.string() + " --out " + (dir_ / "x").string() + " --replicates 0")
                .status,
            2);
  EXPECT_EQ(run_cli("simulate --config " + config.string() + " --out " + (dir_ / "x").string() + " --mode oracle")
                .status,
            2);
  EXPECT_EQ(run_cli("simulate --config " + config.string()).status, 2);
}

TEST_F(CliTest, AllReplicatesInfeasibleExitsFour) {
  const auto config = write_config(
      "jobs = 10\n"
      "group = 8, 10:50, 50:75, 30:35\n"
      "group = 4, 100, 100, 25\n");
  const auto out = dir_ / "inf";
  const auto res = run_cli("simulate --config " + config.string() + " --out " + out.string() + " --replicates 2");
  EXPECT_EQ(res.status, 4) << res.output;
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["aggregate"]["replicates_infeasible"], 2);
}
