#include <cmath>

#include <gtest/gtest.h>

#include "entangle/decomposition.hpp"
#include "entangle/error.hpp"
#include "entangle/scenarios.hpp"
#include "random_instances.hpp"

namespace entangle {
namespace {

const auto kZeroOne = LossFunction::zero_one();

TEST(TwoModelTest, ScenarioOneBeforeAndAfter) {
  const auto r = run_scenario(build_s1_approximation());
  const HypothesisFamily linear = LinearClassifier2d{};
  const auto check = [&](const ValidatedGraph& g, const ModelSet& m, double approx) {
    const auto sig = node_featurizer(g, m, "w");
    const auto w = restricted_optimal(r.dist, sig, linear, "w", kZeroOne);
    const auto d = decompose_two_model(r.dist, sig, w, linear, "w", kZeroOne);
    EXPECT_EQ(d.upstream_error, 0.0);
    EXPECT_NEAR(d.approximation_error, approx, 1e-12);
    EXPECT_EQ(d.estimation_error, 0.0);
    EXPECT_NEAR(d.total_excess, approx, 1e-12);
  };
  check(r.graph, r.before.models, 0.0);
  check(r.outcome.graph_after, r.outcome.models_after, 0.25);
}

TEST(TwoModelTest, RestrictedOptimumHasNoEstimationError) {
  for (std::uint64_t s = 0; s < 60; ++s) {
    const auto inst = testing::random_instance(s);
    const auto sig = node_featurizer(inst.graph, inst.models, "w");
    const auto& family = inst.models.at("w").family;
    const auto best = restricted_optimal(inst.dist, sig, family, "w", kZeroOne);
    EXPECT_EQ(decompose_two_model(inst.dist, sig, best, family, "w", kZeroOne).estimation_error, 0.0);
  }
}

TEST(TwoModelTest, TermsTelescopeAndAreNonnegative) {
  for (std::uint64_t s = 0; s < 150; ++s) {
    const auto inst = testing::random_instance(s + 1000);
    const auto d = decompose_node(inst.dist, inst.graph, inst.models, "w");
    EXPECT_LT(std::abs(d.residual()), 1e-12) << s;
    EXPECT_GE(d.upstream_error, -1e-12) << s;
    EXPECT_GE(d.approximation_error, -1e-12) << s;
    EXPECT_GE(d.estimation_error, -1e-12) << s;
    EXPECT_NEAR(d.total_excess, d.downstream_risk - d.bayes_risk, 1e-15);
  }
}

TEST(TwoUpstreamTest, ScenarioThree) {
  const auto r = run_scenario(build_s3_anticorrelated());
  const auto& b = *r.before.upstream_decomposition;
  const auto& a = *r.after.upstream_decomposition;
  EXPECT_EQ(b.compatibility_error, 0.0);
  EXPECT_EQ(b.excess_upstream_error, 0.0);
  EXPECT_NEAR(a.compatibility_error, 0.125, 1e-12);
  EXPECT_EQ(a.excess_upstream_error, 0.0);
  EXPECT_NEAR(a.conditioned_risk, 0.125, 1e-12);
  EXPECT_EQ(a.companion_risk, 0.0);
}

TEST(TwoUpstreamTest, OptimalCompanionHasNoCompatibilityError) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto inst = testing::random_instance(s, testing::UpstreamShape::two_binary);
    const auto candidates = testing::all_tables_for(inst, "v");
    const auto first = decompose_two_upstream(inst.dist, inst.graph, inst.models, "w", "v", candidates);
    inst.models.models.insert_or_assign("v", first.companion);
    const auto again = decompose_two_upstream(inst.dist, inst.graph, inst.models, "w", "v", candidates);
    EXPECT_NEAR(again.compatibility_error, 0.0, 1e-12);
  }
}

TEST(TwoUpstreamTest, SplitsTheUpstreamError) {
  for (std::uint64_t s = 0; s < 150; ++s) {
    const auto inst = testing::random_instance(s + 5000, testing::UpstreamShape::two_binary);
    const auto d = decompose_node(inst.dist, inst.graph, inst.models, "w");
    const auto u = decompose_two_upstream(inst.dist, inst.graph, inst.models, "w", "v",
                                          testing::all_tables_for(inst, "v"));
    EXPECT_LT(std::abs(u.compatibility_error + u.excess_upstream_error - d.upstream_error), 1e-12);
    EXPECT_GE(u.compatibility_error, -1e-12);
    EXPECT_GE(u.excess_upstream_error, -1e-12);
    EXPECT_NEAR(u.upstream_error(), d.upstream_error, 1e-12);
  }
}

TEST(TwoUpstreamTest, CompanionMustBeAParent) {
  const auto inst = testing::random_instance(1, testing::UpstreamShape::two_binary);
  EXPECT_THROW(decompose_two_upstream(inst.dist, inst.graph, inst.models, "w", "w", {}), Error);
  EXPECT_THROW(decompose_two_upstream(inst.dist, inst.graph, inst.models, "w", "v", {}), Error);
}

}  // namespace
}  // namespace entangle
