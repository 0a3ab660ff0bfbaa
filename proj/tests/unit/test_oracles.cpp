#include <cmath>

#include <gtest/gtest.h>

#include "entangle/error.hpp"
#include "entangle/oracles.hpp"
#include "entangle/scenarios.hpp"
#include "random_instances.hpp"

namespace entangle {
namespace {

const auto kZeroOne = LossFunction::zero_one();

Example labelled(double x, double y) { return {{x}, {{"t", {y}}}}; }

// Featurizers refer to the report's graph and models, so the report must outlive them.
struct Stages {
  explicit Stages(const ScenarioBundle& bundle)
      : report(run_scenario(bundle)),
        before(node_featurizer(report.graph, report.before.models, "w")),
        after(node_featurizer(report.outcome.graph_after, report.outcome.models_after, "w")) {}

  ScenarioReport report;
  Featurizer before;
  Featurizer after;
};

TEST(BayesOptimalTest, DeterministicLabelsAreReproduced) {
  const GroundTruthDistribution d({{labelled(0, 1), 0.5}, {labelled(1, -1), 0.5}});
  const auto o = bayes_optimal(d, "t", kZeroOne);
  EXPECT_EQ(o.risk, 0.0);
  EXPECT_EQ(o(Tuple{0}), (Tuple{kPositive}));
  EXPECT_EQ(o(Tuple{1}), (Tuple{kNegative}));
}

TEST(BayesOptimalTest, CoLocatedPointsUseMajority) {
  const GroundTruthDistribution d({{labelled(0, 1), 0.7}, {labelled(0, -1), 0.3}});
  const auto o = bayes_optimal(d, "t", kZeroOne);
  EXPECT_EQ(o(Tuple{0}), (Tuple{kPositive}));
  EXPECT_NEAR(o.risk, 0.3, 1e-12);
}

TEST(BayesOptimalTest, ScenarioOneHasZeroBayesRisk) {
  const auto b = build_s1_approximation();
  EXPECT_EQ(bayes_optimal(make_distribution(b), "w", kZeroOne).risk, 0.0);
}

TEST(BayesOptimalTest, InvalidDistributionsAreRejected) {
  EXPECT_THROW(GroundTruthDistribution({}), Error);
  EXPECT_THROW(GroundTruthDistribution({{labelled(0, 1), 0.7}}), Error);
  EXPECT_THROW(GroundTruthDistribution({{labelled(0, 1), 1.2}, {labelled(1, 1), -0.2}}), Error);
}

TEST(BayesOptimalTest, UnknownSignatureIsReported) {
  const GroundTruthDistribution d({{labelled(0, 1), 1.0}});
  const auto o = bayes_optimal(d, "t", kZeroOne);
  EXPECT_THROW(o(Tuple{5}), Error);
}

TEST(ConditionedOptimalTest, IdentitySignatureEqualsBayes) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto inst = testing::random_instance(s);
    const auto bayes = bayes_optimal(inst.dist, "w", kZeroOne);
    const auto cond = conditioned_optimal(inst.dist, identity_featurizer(), "w", kZeroOne);
    EXPECT_EQ(cond.table, bayes.table);
    EXPECT_NEAR(cond.risk, bayes.risk, 1e-15);
  }
}

TEST(ConditionedOptimalTest, ScenarioThreeCollisionSharesTheLabel) {
  // p2 and p4 both map to (-, +) and both carry y_w = -.
  const Stages st(build_s3_anticorrelated());
  const auto o = conditioned_optimal(st.report.dist, st.before, "w", kZeroOne);
  EXPECT_EQ(o.table.size(), 3u);
  EXPECT_EQ(o(Tuple{kNegative, kPositive}), (Tuple{kNegative}));
  EXPECT_EQ(o.risk, 0.0);
}

TEST(ConditionedOptimalTest, ScenarioFourMergedSignature) {
  const Stages st(build_s4_correlated());
  const auto o = conditioned_optimal(st.report.dist, st.after, "w", kZeroOne);
  EXPECT_EQ(o(Tuple{kPositive, kPositive}), (Tuple{kPositive}));
  EXPECT_NEAR(o.risk, 0.2, 1e-12);
}

TEST(ConditionedOptimalTest, InvariantUnderSignatureRecoding) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto inst = testing::random_instance(s, testing::UpstreamShape::two_binary);
    const auto sig = node_featurizer(inst.graph, inst.models, "w");
    const Featurizer recoded = [&](const Example& e) {
      auto t = sig(e);
      return Tuple{3.0 * t[1] + 7.0, -t[0]};
    };
    EXPECT_NEAR(conditioned_optimal(inst.dist, sig, "w", kZeroOne).risk,
                conditioned_optimal(inst.dist, recoded, "w", kZeroOne).risk, 1e-15);
  }
}

TEST(ConditionedOptimalTest, RegressionUsesLowerWeightedMedian) {
  EXPECT_EQ(optimal_output({{{1.0}, 0.2}, {{5.0}, 0.3}, {{9.0}, 0.5}}, LossFunction::mean_absolute_error()),
            (Tuple{5.0}));
  EXPECT_EQ(optimal_output({{{1.0}, 0.5}, {{5.0}, 0.5}}, LossFunction::mean_absolute_error()), (Tuple{1.0}));
  EXPECT_EQ(optimal_output({{{kPositive}, 0.5}, {{kNegative}, 0.5}}, kZeroOne), (Tuple{kNegative}));
}

TEST(RestrictedOptimalTest, ScenarioOneLinearFamily) {
  const Stages st(build_s1_approximation());
  const HypothesisFamily linear = LinearClassifier2d{};
  const auto& d = st.report.dist;
  const auto before = restricted_optimal(d, st.before, linear, "w", kZeroOne);
  const auto after = restricted_optimal(d, st.after, linear, "w", kZeroOne);
  const auto risk = [&](const Featurizer& f, const TrainedModel& m) {
    return distribution_risk(d, f, [&](const Tuple& s) { return predict(m, s); }, "w", kZeroOne);
  };
  EXPECT_EQ(risk(st.before, before), 0.0);
  EXPECT_NEAR(risk(st.after, after), 0.25, 1e-12);
}

TEST(RestrictedOptimalTest, TableFamilyEqualsConditioned) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto inst = testing::random_instance(s);
    const auto sig = node_featurizer(inst.graph, inst.models, "w");
    const auto cond = conditioned_optimal(inst.dist, sig, "w", kZeroOne);
    const auto table = restricted_optimal(inst.dist, sig, TableFamily{}, "w", kZeroOne);
    for (const auto& [k, v] : cond.table) EXPECT_EQ(predict(table, k), v);
  }
}

TEST(RestrictedOptimalTest, RiskOrderingHolds) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto inst = testing::random_instance(s);
    const auto sig = node_featurizer(inst.graph, inst.models, "w");
    const auto& w = inst.models.at("w");
    const auto eval = [&](const TrainedModel& m) {
      return distribution_risk(inst.dist, sig, [&](const Tuple& t) { return predict(m, t); }, "w", kZeroOne);
    };
    const double bayes = bayes_optimal(inst.dist, "w", kZeroOne).risk;
    const double cond = conditioned_optimal(inst.dist, sig, "w", kZeroOne).risk;
    const double restricted = eval(restricted_optimal(inst.dist, sig, w.family, "w", kZeroOne));
    const double trained = eval(w);
    EXPECT_LE(bayes, cond + 1e-12) << s;
    EXPECT_LE(cond, restricted + 1e-12) << s;
    EXPECT_LE(restricted, trained + 1e-12) << s;
  }
}

TEST(CompanionTest, ScenarioThreeAdmitsAPerfectCompanion) {
  const Stages st(build_s3_anticorrelated());
  const auto& r = st.report;
  const auto candidates = companion_candidates(build_s3_anticorrelated(), r.graph, r.dist, r.before.models);
  ASSERT_EQ(candidates.size(), 16u);
  const auto best = optimal_companion_upstream(r.dist, r.graph, r.before.models, "w", "v", candidates, kZeroOne);
  EXPECT_EQ(best.downstream_risk, 0.0);
}

TEST(CompanionTest, ScenarioFourRecoversWithAnotherCompanion) {
  const Stages st(build_s4_correlated());
  const auto& r = st.report;
  const auto& models = r.outcome.models_after;
  const auto candidates = companion_candidates(build_s4_correlated(), r.outcome.graph_after, r.dist, models);
  const auto best =
      optimal_companion_upstream(r.dist, r.outcome.graph_after, models, "w", "v", candidates, kZeroOne);
  EXPECT_EQ(best.downstream_risk, 0.0);
}

TEST(CompanionTest, SingleCandidateIsReturned) {
  const auto inst = testing::random_instance(3, testing::UpstreamShape::two_binary);
  const std::vector<TrainedModel> one{inst.models.at("v")};
  const auto best = optimal_companion_upstream(inst.dist, inst.graph, inst.models, "w", "v", one, kZeroOne);
  EXPECT_EQ(best.index, 0u);
  EXPECT_TRUE(best.model.same_function(one[0]));
  EXPECT_THROW(optimal_companion_upstream(inst.dist, inst.graph, inst.models, "w", "v", {}, kZeroOne), Error);
}

TEST(CompanionTest, WinnerIsNoWorseThanAnyCandidate) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto inst = testing::random_instance(s, testing::UpstreamShape::two_binary);
    const auto candidates = testing::all_tables_for(inst, "v");
    const auto best = optimal_companion_upstream(inst.dist, inst.graph, inst.models, "w", "v", candidates, kZeroOne);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      ModelSet m = inst.models;
      m.models.insert_or_assign("v", candidates[i]);
      const double risk = conditioned_optimal(inst.dist, node_featurizer(inst.graph, m, "w"), "w", kZeroOne).risk;
      EXPECT_LE(best.downstream_risk, risk + 1e-12);
      if (i < best.index) {
        EXPECT_GT(risk, best.downstream_risk + 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace entangle
