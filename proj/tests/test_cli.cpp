#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace coursedp;
namespace fs = std::filesystem;

namespace {

const std::string kData = COURSEDP_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("coursedp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result call(std::vector<std::string> args, const fs::path& out_dir = {}) {
    args.insert(args.begin(), {"--out-dir", (out_dir.empty() ? dir_ : out_dir).string()});
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PlanCounterExample) {
  const auto r = call({"plan", kData + "/counter_example.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("V(s0): 0.81\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("first action: C1\n"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "policy.json"));
  EXPECT_TRUE(fs::exists(dir_ / "graph_stats.csv"));
}

TEST_F(Cli, PlanCandidates) {
  const auto r = call({"plan", kData + "/four_course.json", "--candidates", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int j = 1; j <= 3; ++j) EXPECT_TRUE(fs::exists(dir_ / ("candidate_" + std::to_string(j) + ".json")));
}

TEST_F(Cli, PlanInfeasibleExitsThree) {
  const auto r = call({"plan", kData + "/infeasible.json"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("blocking course: ADV"), std::string::npos) << r.err;
}

TEST_F(Cli, PlanSizeLimitExitsFour) {
  const auto r = call({"--max-nodes", "5", "plan", kData + "/mae19_rich.json"});
  EXPECT_EQ(r.code, 4) << r.err;
}

TEST_F(Cli, MissingFileExitsFive) {
  EXPECT_EQ(call({"plan", (dir_ / "nope.json").string()}).code, 5);
  std::ofstream(dir_ / "bad.json") << "{ not json";
  EXPECT_EQ(call({"plan", (dir_ / "bad.json").string()}).code, 5);
}

TEST_F(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"plan", kData + "/counter_example.json", "--reward", "fast"}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
}

TEST_F(Cli, SimulateAndChecksum) {
  ASSERT_EQ(call({"plan", kData + "/counter_example.json"}).code, 0);
  const auto policy = (dir_ / "policy.json").string();
  const auto r = call({"simulate", kData + "/counter_example.json", policy, "-n", "20000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(dir_ / "report.json"));
  EXPECT_NEAR(report.at("on_time_prob").get<double>(), 0.81, 0.02);
  EXPECT_EQ(slurp(dir_ / "histogram.csv").rfind("quarter,count\n", 0), 0U);
  EXPECT_EQ(call({"simulate", kData + "/four_course.json", policy}).code, 2);
}

TEST_F(Cli, Recommend) {
  ASSERT_EQ(call({"plan", kData + "/counter_example.json"}).code, 0);
  const auto policy = (dir_ / "policy.json").string();
  auto r = call({"recommend", policy, "--quarter", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("recommendation: C1\n"), std::string::npos) << r.out;
  r = call({"recommend", policy, "--state", "C1,C2", "--quarter", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("terminal"), std::string::npos);
  r = call({"recommend", policy, "--state", "C2", "--quarter", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("quarter 1"), std::string::npos) << r.err;
  EXPECT_EQ(call({"recommend", policy, "--state", "XYZ"}).code, 2);
  EXPECT_EQ(call({"recommend", policy, "--quarter", "9"}).code, 2);
}

TEST_F(Cli, InspectWritesStateCounts) {
  const auto r = call({"inspect", kData + "/four_course.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir_ / "state_counts.csv");
  EXPECT_EQ(csv.rfind("quarter,num_states\n0,1\n", 0), 0U) << csv;
  EXPECT_NE(r.out.find("saturation quarter: "), std::string::npos);
}

TEST_F(Cli, BanditWritesAllSchemes) {
  const auto r = call({"bandit", kData + "/gpa_table.csv", "--env", kData + "/gpa_env.json", "-n", "2000",
                       "--curve-stride", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"oracle", "adaptive", "no-personalization", "random"}) {
    EXPECT_TRUE(fs::exists(dir_ / (std::string("history_") + s + ".csv"))) << s;
    const auto reg = slurp(dir_ / (std::string("regret_") + s + ".csv"));
    EXPECT_EQ(reg.rfind("I,cumulative_regret,average_regret\n", 0), 0U);
  }
  std::istringstream in(slurp(dir_ / "curves.csv"));
  EXPECT_EQ(curves_from_csv(in).size(), 4U * 20U);
}

TEST_F(Cli, BanditStrictEnvRejectsUnavailableCell) {
  const auto r = call({"bandit", kData + "/gpa_table.csv", "-n", "5000", "--scheme", "random"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("UnavailableCell"), std::string::npos) << r.err;
}

TEST_F(Cli, ResourceExperiment) {
  const auto r = call({"resource-experiment", "-n", "20000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(slurp(dir_ / "resource.json"));
  EXPECT_GT(doc.at("mean_time_case1").get<double>(), doc.at("mean_time_case2").get<double>());
  EXPECT_EQ(doc.at("leaves").get<int>(), 9);
}

TEST_F(Cli, SameSeedGivesIdenticalOutputs) {
  const auto a = dir_ / "a";
  const auto b = dir_ / "b";
  for (const auto& d : {a, b}) {
    ASSERT_EQ(call({"--seed", "7", "bandit", kData + "/gpa_table.csv", "--env", kData + "/gpa_env.json", "-n",
                    "1000", "--scheme", "adaptive"},
                   d)
                  .code,
              0);
    ASSERT_EQ(call({"--seed", "7", "resource-experiment", "-n", "1000"}, d).code, 0);
  }
  EXPECT_EQ(slurp(a / "history_adaptive.csv"), slurp(b / "history_adaptive.csv"));
  EXPECT_EQ(slurp(a / "resource.json"), slurp(b / "resource.json"));
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  const auto cfg = dir_ / "run.toml";
  std::ofstream(cfg) << "seed = 11\n[resource-experiment]\nsamples = 500\nleaves = 4\n";
  ASSERT_EQ(call({"--config", cfg.string(), "resource-experiment"}).code, 0);
  const auto doc = json::parse(slurp(dir_ / "resource.json"));
  EXPECT_EQ(doc.at("seed").get<std::uint64_t>(), 11U);
  EXPECT_EQ(doc.at("n").get<std::uint64_t>(), 500U);
  EXPECT_EQ(doc.at("leaves").get<int>(), 4);
  ASSERT_EQ(call({"--config", cfg.string(), "--seed", "12", "resource-experiment"}).code, 0);
  EXPECT_EQ(json::parse(slurp(dir_ / "resource.json")).at("seed").get<std::uint64_t>(), 12U);
}
