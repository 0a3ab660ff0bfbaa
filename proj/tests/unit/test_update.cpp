#include <algorithm>

#include <gtest/gtest.h>

#include "entangle/decomposition.hpp"
#include "entangle/error.hpp"
#include "entangle/scenarios.hpp"
#include "random_instances.hpp"

namespace entangle {
namespace {

struct Prepared {
  ScenarioBundle bundle;
  GroundTruthDistribution dist;
  ValidatedGraph graph;
  DatasetMap datasets;
  ModelSet models;
};

Prepared prepare(ScenarioBundle bundle) {
  auto dist = make_distribution(bundle);
  auto graph = validate(bundle.graph);
  auto datasets = materialize_datasets(bundle, dist, kDefaultSeed);
  TrainOptions options;
  options.overrides = bundle.baseline_overrides;
  auto models = train_system(graph, datasets, kDefaultSeed, options);
  return {std::move(bundle), std::move(dist), std::move(graph), std::move(datasets), std::move(models)};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::io_failure;
}

TEST(ApplyUpdateTest, LeafUpdateRetrainsNothing) {
  auto p = prepare(build_leaf_control());
  const auto out = apply_update(p.graph, p.models, p.bundle.update, p.datasets);
  EXPECT_TRUE(out.retrained.empty());
  EXPECT_TRUE(out.self_defeating_nodes.empty());
}

TEST(ApplyUpdateTest, ScenarioOneFlagsDownstream) {
  auto p = prepare(build_s1_approximation());
  const auto out = apply_update(p.graph, p.models, p.bundle.update, p.datasets);
  EXPECT_TRUE(out.improvement_held);
  EXPECT_NEAR(out.before.at("v"), 1.7071067811865475, 1e-9);
  EXPECT_NEAR(out.after.at("v"), 0.0, 1e-12);
  EXPECT_EQ(out.before.at("w"), 0.0);
  EXPECT_NEAR(out.after.at("w"), 0.25, 1e-12);
  EXPECT_EQ(out.retrained, (std::vector<NodeId>{"w"}));
  EXPECT_EQ(out.self_defeating_nodes, (std::set<NodeId>{"w"}));
  EXPECT_EQ(out.models_after.version, p.models.version + 1);
}

TEST(ApplyUpdateTest, WorseTargetFlagsNothing) {
  auto p = prepare(build_s1_approximation());
  UpdateRequest req = p.bundle.update;
  // Swap roles: start from the exact predictor and "update" to the collapsed one.
  ModelSet start = p.models;
  start.models.insert_or_assign("v", std::get<TrainedModel>(req.replacement));
  req.replacement = p.models.at("v");
  const auto out = apply_update(p.graph, start, req, p.datasets);
  EXPECT_FALSE(out.improvement_held);
  EXPECT_TRUE(out.self_defeating_nodes.empty());
}

TEST(ApplyUpdateTest, ErrorsAreTyped) {
  auto p = prepare(build_s1_approximation());
  UpdateRequest req = p.bundle.update;
  req.target = "nope";
  EXPECT_EQ(code_of([&] { apply_update(p.graph, p.models, req, p.datasets); }), ErrorCode::target_not_found);
  req.target = "v";
  req.replacement = make_table_model(TableFamily{}, {{{99.0}, {kPositive}}});
  EXPECT_EQ(code_of([&] { apply_update(p.graph, p.models, req, p.datasets); }),
            ErrorCode::incompatible_replacement);
  req.replacement = UpdateRequest::NewTrainSet{"missing"};
  EXPECT_EQ(code_of([&] { apply_update(p.graph, p.models, req, p.datasets); }),
            ErrorCode::incompatible_replacement);
}

TEST(ApplyUpdateTest, LocalityOnRandomDags) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto sys = testing::random_system(s, 5);
    const auto models = train_system(sys.graph, sys.datasets, s);
    for (const auto& target : sys.graph.order()) {
      UpdateRequest req;
      req.target = target;
      req.replacement = UpdateRequest::NewTrainSet{"alt"};
      const auto out = apply_update(sys.graph, models, req, sys.datasets);
      const auto desc = sys.graph.descendants(target);
      EXPECT_EQ(out.retrained, desc);
      for (const auto& id : sys.graph.order()) {
        if (id == target || std::count(desc.begin(), desc.end(), id)) continue;
        EXPECT_EQ(out.models_after.at(id).params, models.at(id).params);
        EXPECT_EQ(out.models_after.at(id).table, models.at(id).table);
        EXPECT_EQ(out.before.at(id), out.after.at(id));
      }
      for (const auto& id : out.self_defeating_nodes) EXPECT_TRUE(std::count(desc.begin(), desc.end(), id));
      if (!out.improvement_held) {
        EXPECT_TRUE(out.self_defeating_nodes.empty());
      }
    }
  }
}

TEST(ApplyUpdateTest, FamilyAndTrainerReplacements) {
  auto p = prepare(build_s1_approximation());
  UpdateRequest req;
  req.target = "w";
  req.replacement = HypothesisFamily(QuadraticClassifier2d{});
  const auto out = apply_update(p.graph, p.models, req, p.datasets);
  EXPECT_EQ(out.graph_after.node("w").family.kind(), FamilyKind::quadratic_classifier_2d);
  EXPECT_EQ(out.models_after.at("w").family.kind(), FamilyKind::quadratic_classifier_2d);
  req.replacement = TrainerSpec::erm();
  EXPECT_NO_THROW(apply_update(p.graph, p.models, req, p.datasets));
}

TEST(DetectTest, TiesAreImprovementsAndNotDegradation) {
  const std::map<NodeId, double> before{{"t", 0.5}, {"a", 0.2}, {"b", 0.2}, {"c", 0.2}};
  const std::map<NodeId, double> after{{"t", 0.5}, {"a", 0.2}, {"b", 0.3}, {"c", 0.1}};
  bool held = false;
  const auto flags = detect_self_defeating(before, after, "t", {"a", "b", "c"}, {}, &held);
  EXPECT_TRUE(held);
  EXPECT_EQ(flags, (std::set<NodeId>{"b"}));

  UpdateOptions strict;
  strict.strict_improvement = true;
  EXPECT_TRUE(detect_self_defeating(before, after, "t", {"a", "b", "c"}, strict, &held).empty());
  EXPECT_FALSE(held);
}

TEST(DetectTest, ToleranceAbsorbsFloatNoise) {
  const std::map<NodeId, double> before{{"t", 0.5}, {"a", 0.2}};
  const std::map<NodeId, double> after{{"t", 0.5 + 1e-12}, {"a", 0.2 + 1e-12}};
  bool held = false;
  EXPECT_TRUE(detect_self_defeating(before, after, "t", {"a"}, {}, &held).empty());
  EXPECT_TRUE(held);
}

TEST(DetectTest, FlagsExactlyTheDegradedRetrainedNodes) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::map<NodeId, double> before;
    std::map<NodeId, double> after;
    std::vector<NodeId> retrained;
    for (int i = 0; i < 6; ++i) {
      const NodeId id = "n" + std::to_string(i);
      before[id] = static_cast<double>(rng() % 4) / 4.0;
      after[id] = static_cast<double>(rng() % 4) / 4.0;
      if (i > 0 && rng() % 2) retrained.push_back(id);
    }
    bool held = false;
    const auto flags = detect_self_defeating(before, after, "n0", retrained, {}, &held);
    EXPECT_EQ(held, after["n0"] <= before["n0"]);
    std::set<NodeId> expected;
    if (held) {
      for (const auto& id : retrained) {
        if (after[id] > before[id]) expected.insert(id);
      }
    }
    EXPECT_EQ(flags, expected);
  }
}

}  // namespace
}  // namespace entangle
