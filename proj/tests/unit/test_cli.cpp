#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "entangle/cli.hpp"
#include "entangle/config.hpp"
#include "entangle/report.hpp"
#include "entangle/scenarios.hpp"

namespace entangle {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("entangle-cli-" + std::string(info->name()) + "-" +
                                         std::to_string(static_cast<long long>(::getpid())));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path write_config(const std::string& name, const ScenarioBundle& bundle) {
    const auto path = root_ / name;
    write_text(path, dump_json(bundle_to_json(bundle)));
    return path;
  }

  fs::path root_;
  std::ostringstream out_;
  std::ostringstream err_;
};

TEST_F(CliTest, ListIsStable) {
  ASSERT_EQ(run({"list"}), cli::kSuccess);
  const auto text = out_.str();
  std::size_t last = 0;
  for (const auto& s : list_scenarios()) {
    const auto pos = text.find(s.id);
    ASSERT_NE(pos, std::string::npos) << s.id;
    EXPECT_GE(pos, last);
    last = pos;
  }
}

TEST_F(CliTest, ListJsonMatchesText) {
  ASSERT_EQ(run({"list", "--json"}), cli::kSuccess);
  const auto j = Json::parse(out_.str());
  const auto all = list_scenarios();
  ASSERT_EQ(j.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(j[i]["id"], all[i].id);
    EXPECT_EQ(j[i]["description"], all[i].description);
  }
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"list", "--bogus"}), cli::kUsageError);
  EXPECT_EQ(run({}), cli::kUsageError);
  EXPECT_EQ(run({"frobnicate"}), cli::kUsageError);
  EXPECT_EQ(run({"--version"}), cli::kSuccess);
}

TEST_F(CliTest, RunWritesArtifacts) {
  const auto dir = root_ / "out";
  ASSERT_EQ(run({"run", "S1", "--seed", "7", "--out", dir.string()}), cli::kSuccess) << err_.str();
  ASSERT_TRUE(fs::exists(dir / "report.json"));
  ASSERT_TRUE(fs::exists(dir / "points.csv"));
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));
  const auto report = Json::parse(read(dir / "report.json"));
  EXPECT_EQ(report["metrics"]["risk.before.w"], 0.0);
  EXPECT_EQ(report["metrics"]["risk.after.w"], 0.25);
  EXPECT_EQ(report["seed"], 7);
  EXPECT_TRUE(report["all_effects_hold"].get<bool>());
  const auto manifest = Json::parse(read(dir / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["scenario"], "S1-approximation");
  EXPECT_EQ(manifest["run_id"].get<std::string>().size(), 64u);
  EXPECT_TRUE(manifest.contains("timestamp"));

  const auto csv = read(dir / "points.csv");
  EXPECT_EQ(csv.rfind("index,mass,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(CliTest, MonteCarloRunReportsBothStages) {
  const auto dir = root_ / "s2";
  ASSERT_EQ(run({"run", "S2", "--trials", "1000", "--out", dir.string(), "--quiet"}), cli::kSuccess);
  const auto report = Json::parse(read(dir / "report.json"));
  EXPECT_EQ(report["trials"], 1000);
  EXPECT_TRUE(report["monte_carlo"]["before"].contains("mean"));
  EXPECT_TRUE(report["monte_carlo"]["after"].contains("stderr"));
  EXPECT_TRUE(out_.str().empty());
}

TEST_F(CliTest, ReportsAreByteIdentical) {
  for (const std::string id : {"S1", "S3", "S5"}) {
    ASSERT_EQ(run({"run", id, "--out", (root_ / (id + "a")).string()}), cli::kSuccess);
    ASSERT_EQ(run({"run", id, "--out", (root_ / (id + "b")).string(), "--serial"}), cli::kSuccess);
    EXPECT_EQ(read(root_ / (id + "a") / "report.json"), read(root_ / (id + "b") / "report.json")) << id;
    EXPECT_EQ(read(root_ / (id + "a") / "points.csv"), read(root_ / (id + "b") / "points.csv")) << id;
  }
}

TEST_F(CliTest, OutputRootFromEnvironment) {
  ::setenv(cli::kOutputRootEnv, root_.c_str(), 1);
  const int code = run({"run", "S3", "--quiet"});
  ::unsetenv(cli::kOutputRootEnv);
  ASSERT_EQ(code, cli::kSuccess) << err_.str();
  std::size_t found = 0;
  for (const auto& e : fs::directory_iterator(root_)) {
    const auto name = e.path().filename().string();
    if (name.rfind("S3-anticorrelated-", 0) == 0) {
      ++found;
      EXPECT_EQ(name.size(), std::string("S3-anticorrelated-").size() + 12);
      EXPECT_TRUE(fs::exists(e.path() / "report.json"));
    }
  }
  EXPECT_EQ(found, 1u);
}

TEST_F(CliTest, MissingConfigIsUsageError) {
  EXPECT_EQ(run({"run", (root_ / "missing.cfg").string()}), cli::kUsageError);
  EXPECT_NE(err_.str().find("missing.cfg"), std::string::npos);
}

TEST_F(CliTest, InvalidConfigIsUsageError) {
  const auto path = root_ / "bad.json";
  write_text(path, "{ \"id\": 3, ");
  EXPECT_EQ(run({"run", path.string()}), cli::kUsageError);
  EXPECT_NE(err_.str().find("line"), std::string::npos);
}

TEST_F(CliTest, ViolatedEffectExitsTwo) {
  auto b = build_s3_anticorrelated();
  b.expected_effects.push_back({"no downstream harm", "risk.after.w", Comparison::eq, 0.0, 1e-12, std::nullopt});
  const auto path = write_config("violated.json", b);
  const auto dir = root_ / "violated";
  EXPECT_EQ(run({"run", path.string(), "--out", dir.string()}), cli::kEffectViolated);
  EXPECT_NE(err_.str().find("no downstream harm"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
}

TEST_F(CliTest, UnwritableOutputExitsThree) {
  const auto blocker = root_ / "file";
  write_text(blocker, "x");
  EXPECT_EQ(run({"run", "S1", "--out", (blocker / "sub").string()}), cli::kInternalError);
}

TEST_F(CliTest, ConfigFileMatchesBuiltin) {
  ASSERT_EQ(run({"export", "S4", "--out", (root_ / "s4.json").string()}), cli::kSuccess);
  ASSERT_EQ(run({"run", (root_ / "s4.json").string(), "--out", (root_ / "a").string()}), cli::kSuccess);
  ASSERT_EQ(run({"run", "S4", "--out", (root_ / "b").string()}), cli::kSuccess);
  const auto a = Json::parse(read(root_ / "a" / "report.json"));
  const auto b = Json::parse(read(root_ / "b" / "report.json"));
  EXPECT_EQ(a["metrics"], b["metrics"]);
  EXPECT_EQ(run({"export", "S9"}), cli::kUsageError);
}

TEST_F(CliTest, DecomposeTwoModel) {
  const auto dir = root_ / "d1";
  ASSERT_EQ(run({"decompose", "S1", "--pair", "two-model", "--out", dir.string()}), cli::kSuccess) << err_.str();
  const auto doc = Json::parse(read(dir / "decomposition.json"));
  EXPECT_EQ(doc["terms"]["upstream_error"], 0.0);
  EXPECT_EQ(doc["terms"]["approximation_error"], 0.25);
  EXPECT_EQ(doc["terms"]["estimation_error"], 0.0);
  EXPECT_LT(std::abs(doc["terms"]["residual"].get<double>()), 1e-12);
  EXPECT_NE(out_.str().find("residual"), std::string::npos);
}

TEST_F(CliTest, DecomposeTwoUpstream) {
  const auto dir = root_ / "d3";
  ASSERT_EQ(run({"decompose", "S3", "--pair", "two-upstream", "--out", dir.string()}), cli::kSuccess);
  const auto doc = Json::parse(read(dir / "decomposition.json"));
  EXPECT_EQ(doc["terms"]["compatibility_error"], 0.125);
  EXPECT_EQ(doc["terms"]["excess_upstream_error"], 0.0);
  EXPECT_EQ(run({"decompose", "S1", "--pair", "two-upstream", "--out", (root_ / "x").string()}), cli::kUsageError);
  EXPECT_EQ(run({"decompose", "S1", "--pair", "three-model"}), cli::kUsageError);
}

TEST_F(CliTest, DecomposePerfectSystemIsAllZero) {
  // S3 layout with exact upstreams and w's task equal to u's task.
  auto b = build_s3_anticorrelated();
  for (auto& p : b.support) p.example.targets["w"] = p.example.targets["u"];
  for (auto& n : b.graph.nodes) {
    if (n.id == "u") n.trainer = TrainerSpec::fixed(std::get<TrainedModel>(b.update.replacement));
  }
  b.expected_effects.clear();
  const auto path = write_config("perfect.json", b);
  const auto dir = root_ / "perfect";
  ASSERT_EQ(run({"decompose", path.string(), "--stage", "before", "--out", dir.string()}), cli::kSuccess)
      << err_.str();
  const auto doc = Json::parse(read(dir / "decomposition.json"));
  for (const auto* term : {"upstream_error", "approximation_error", "estimation_error", "total_excess"}) {
    EXPECT_EQ(doc["terms"][term], 0.0) << term;
  }
}

}  // namespace
}  // namespace entangle
