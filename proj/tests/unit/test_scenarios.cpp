#include <gtest/gtest.h>

#include "entangle/error.hpp"
#include "entangle/scenarios.hpp"

namespace entangle {
namespace {

double metric(const ScenarioReport& r, const std::string& name) {
  const auto it = r.metrics.find(name);
  EXPECT_NE(it, r.metrics.end()) << name;
  return it == r.metrics.end() ? 0.0 : it->second;
}

TEST(ScenarioListTest, FiveBundlesInStableOrder) {
  const auto all = list_scenarios();
  ASSERT_EQ(all.size(), 5u);
  EXPECT_EQ(all[0].id, "S1-approximation");
  EXPECT_EQ(all[1].id, "S2-estimation");
  EXPECT_EQ(all[2].id, "S3-anticorrelated");
  EXPECT_EQ(all[3].id, "S4-correlated");
  EXPECT_EQ(all[4].id, "S5-loss-mismatch");
  for (const auto& s : all) {
    EXPECT_FALSE(s.description.empty());
    EXPECT_TRUE(find_scenario(s.id));
  }
  EXPECT_EQ(find_scenario("S3")->id, "S3-anticorrelated");
  EXPECT_TRUE(find_scenario("leaf-control"));
  EXPECT_FALSE(find_scenario("S9"));
}

TEST(ScenarioTest, EveryBundleIsSelfDefeatingWithEffectsHolding) {
  for (const auto& s : list_scenarios()) {
    const auto r = run_scenario(*find_scenario(s.id));
    EXPECT_TRUE(r.outcome.improvement_held) << s.id;
    EXPECT_FALSE(r.outcome.self_defeating_nodes.empty()) << s.id;
    EXPECT_TRUE(r.self_defeating) << s.id;
    EXPECT_TRUE(r.all_effects_hold) << s.id;
    EXPECT_NO_THROW(require_expected_effects(r));
    EXPECT_FALSE(r.effects.empty());
  }
}

TEST(ScenarioTest, LeafControlHasNoVerdict) {
  const auto r = run_scenario(build_leaf_control());
  EXPECT_FALSE(r.self_defeating);
  EXPECT_TRUE(r.outcome.retrained.empty());
  EXPECT_TRUE(r.all_effects_hold);
}

TEST(ScenarioTest, ExactScenariosAreSeedIndependent) {
  for (auto build : {build_s1_approximation, build_s3_anticorrelated, build_s4_correlated}) {
    const auto bundle = build();
    const auto base = run_scenario(bundle);
    for (std::uint64_t seed : {2u, 7u, 123u}) {
      RunOptions o;
      o.seed = seed;
      const auto r = run_scenario(bundle, o);
      EXPECT_TRUE(r.all_effects_hold) << bundle.id << " seed " << seed;
      EXPECT_EQ(r.metrics.at("risk.after.w"), base.metrics.at("risk.after.w"));
    }
  }
}

TEST(ScenarioOneTest, Values) {
  const auto r = run_scenario(build_s1_approximation());
  EXPECT_NEAR(metric(r, "test_loss.before.v"), 1.7071067811865475, 1e-9);
  EXPECT_EQ(metric(r, "test_loss.after.v"), 0.0);
  EXPECT_EQ(metric(r, "risk.before.w"), 0.0);
  EXPECT_NEAR(metric(r, "risk.after.w"), 0.25, 1e-12);
  EXPECT_EQ(metric(r, "decomposition.after.upstream_error"), 0.0);
  EXPECT_NEAR(metric(r, "decomposition.after.approximation_error"), 0.25, 1e-12);
  EXPECT_EQ(metric(r, "decomposition.after.estimation_error"), 0.0);
  EXPECT_EQ(r.bayes_oracle.risk, 0.0);
}

TEST(ScenarioTwoTest, EstimationTermCarriesTheFailure) {
  const auto r = run_scenario(build_s2_estimation());
  EXPECT_LT(metric(r, "test_loss.after.v"), metric(r, "test_loss.before.v"));
  EXPECT_EQ(metric(r, "test_loss.after.v"), 0.0);
  EXPECT_GE(metric(r, "monte_carlo.gap"), 0.05);
  EXPECT_GE(metric(r, "monte_carlo.gap_in_se"), 2.0);
  EXPECT_GE(metric(r, "monte_carlo.expected_estimation_error_delta"), 0.05);
  EXPECT_EQ(metric(r, "decomposition.after.upstream_error"), 0.0);
  ASSERT_TRUE(r.before.monte_carlo);
  EXPECT_EQ(r.before.monte_carlo->sample_size, 6u);
  EXPECT_EQ(r.trials, 1000u);
}

TEST(ScenarioTwoTest, MarginHoldsAtOtherSeeds) {
  for (std::uint64_t seed : {2u, 3u}) {
    RunOptions o;
    o.seed = seed;
    const auto r = run_scenario(build_s2_estimation(), o);
    EXPECT_GE(metric(r, "monte_carlo.gap_in_se"), 2.0) << seed;
  }
}

TEST(ScenarioThreeTest, Values) {
  const auto r = run_scenario(build_s3_anticorrelated());
  EXPECT_NEAR(metric(r, "test_loss.before.u"), 0.25, 1e-12);
  EXPECT_EQ(metric(r, "test_loss.after.u"), 0.0);
  EXPECT_EQ(metric(r, "risk.before.w"), 0.0);
  EXPECT_NEAR(metric(r, "risk.after.w"), 0.125, 1e-12);
  EXPECT_NEAR(metric(r, "upstream_decomposition.after.compatibility_error"), 0.125, 1e-12);
  EXPECT_EQ(metric(r, "upstream_decomposition.after.excess_upstream_error"), 0.0);
  EXPECT_EQ(metric(r, "upstream_decomposition.before.compatibility_error"), 0.0);
}

TEST(ScenarioFourTest, Values) {
  const auto r = run_scenario(build_s4_correlated());
  EXPECT_NEAR(metric(r, "test_loss.before.u"), 0.30, 1e-12);
  EXPECT_NEAR(metric(r, "test_loss.after.u"), 0.25, 1e-12);
  EXPECT_EQ(metric(r, "risk.before.w"), 0.0);
  EXPECT_NEAR(metric(r, "risk.after.w"), 0.20, 1e-12);
  EXPECT_EQ(metric(r, "agreement.after.u.v"), 1.0);
  EXPECT_GT(metric(r, "upstream_decomposition.after.compatibility_error"),
            metric(r, "upstream_decomposition.after.excess_upstream_error"));
}

TEST(ScenarioFiveTest, LossMismatch) {
  const auto r = run_scenario(build_s5_loss_mismatch());
  EXPECT_LE(metric(r, "test_loss.after.u"), metric(r, "test_loss.before.u"));
  EXPECT_GT(metric(r, "subset_test_loss.far.after.u"), metric(r, "subset_test_loss.far.before.u"));
  EXPECT_GT(metric(r, "test_loss.after.w"), metric(r, "test_loss.before.w"));
  EXPECT_GT(metric(r, "decomposition.delta.upstream_error"), 0.0);
  EXPECT_TRUE(r.self_defeating);

  RunOptions filtered;
  filtered.range_filter = true;
  const auto f = run_scenario(build_s5_loss_mismatch(), filtered);
  EXPECT_LE(metric(f, "test_loss.after.w"), metric(f, "test_loss.before.w"));
  EXPECT_FALSE(f.self_defeating);
  EXPECT_TRUE(f.all_effects_hold);
}

TEST(RunScenarioTest, ViolatedEffectIsNamed) {
  auto b = build_s1_approximation();
  b.expected_effects.push_back({"impossible", "risk.after.w", Comparison::lt, 0.0, 1e-12, std::nullopt});
  const auto r = run_scenario(b);
  EXPECT_FALSE(r.all_effects_hold);
  try {
    require_expected_effects(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::expected_effect_violated);
    EXPECT_NE(std::string(e.what()).find("impossible"), std::string::npos);
  }
}

TEST(RunScenarioTest, ComparisonSemantics) {
  auto b = build_s1_approximation();
  b.expected_effects = {
      {"eq", "risk.after.w", Comparison::eq, 0.25 + 1e-13, 1e-12, std::nullopt},
      {"le", "risk.after.w", Comparison::le, 0.25, 0.0, std::nullopt},
      {"ge", "risk.after.w", Comparison::ge, 0.25, 0.0, std::nullopt},
      {"gt", "risk.after.w", Comparison::gt, 0.25, 0.0, std::nullopt},
      {"lt", "risk.after.w", Comparison::lt, 0.3, 0.0, std::nullopt},
      {"gated", "risk.after.w", Comparison::gt, 5.0, 0.0, true},
  };
  const auto r = run_scenario(b);
  ASSERT_EQ(r.effects.size(), 6u);
  EXPECT_TRUE(r.effects[0].passed);
  EXPECT_TRUE(r.effects[1].passed);
  EXPECT_TRUE(r.effects[2].passed);
  EXPECT_FALSE(r.effects[3].passed);
  EXPECT_TRUE(r.effects[4].passed);
  EXPECT_FALSE(r.effects[5].checked);
}

TEST(RunScenarioTest, DeterministicPerOptions) {
  const auto a = run_scenario(build_s5_loss_mismatch());
  const auto b = run_scenario(build_s5_loss_mismatch());
  EXPECT_EQ(a.metrics, b.metrics);
  RunOptions serial;
  serial.parallel = false;
  EXPECT_EQ(run_scenario(build_s5_loss_mismatch(), serial).metrics, a.metrics);
}

TEST(DatasetsTest, SupportReplicationAndSampling) {
  const auto b = build_s3_anticorrelated();
  const auto d = make_distribution(b);
  const auto sets = materialize_datasets(b, d, 1);
  EXPECT_EQ(sets.at("train").size(), 8u);
  EXPECT_EQ(sets.at("test").role, DatasetRole::test);

  const auto s2 = build_s2_estimation();
  const auto d2 = make_distribution(s2);
  const auto a = materialize_datasets(s2, d2, 5);
  const auto c = materialize_datasets(s2, d2, 5);
  ASSERT_EQ(a.at("train_w").size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.at("train_w").items[i].x, c.at("train_w").items[i].x);
}

}  // namespace
}  // namespace entangle
