#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "entangle/decomposition.hpp"
#include "entangle/system_graph.hpp"

namespace entangle {

/// How a named dataset is materialized from the distribution at run time.
struct DatasetSpec {
  enum class Kind {
    support,  // each support point replicated round(mass * resolution) times
    sample,   // `size` draws by mass, seeded from (run seed, dataset name)
    indices,  // explicit support indices
  };

  Kind kind = Kind::support;
  DatasetRole role = DatasetRole::train;
  std::size_t resolution = 1;
  std::size_t size = 0;
  std::vector<std::size_t> indices;
};

enum class Comparison { eq, lt, le, gt, ge };

/// Declarative check against one named report metric (see `report_metrics`).
struct ExpectedEffect {
  std::string description;
  std::string metric;
  Comparison op = Comparison::eq;
  double value = 0.0;
  double tolerance = 1e-12;
  /// Only checked when range filtering is enabled (true) or disabled (false).
  std::optional<bool> when_range_filter;
};

struct MonteCarloSpec {
  NodeId node;
  std::size_t sample_size = 0;
  std::size_t trials = 1000;
};

struct CompanionSpec {
  NodeId node;
  /// Candidate set: all binary tables over the companion's input keys on the
  /// support, or an explicit list when non-empty.
  std::vector<TrainedModel> explicit_candidates;
};

struct AnalysisSpec {
  NodeId downstream;
  std::optional<CompanionSpec> companion;
  /// Pairs of nodes whose post-update predictions are compared on the support.
  std::vector<std::pair<NodeId, NodeId>> agreement_pairs;
};

struct NamedSubset {
  std::string name;
  RangeFilter filter;
};

enum class VerdictBasis { test_loss, monte_carlo };

/// A complete runnable experiment. Also the in-memory form of a scenario
/// configuration file.
struct ScenarioBundle {
  std::string id;
  std::string description;
  std::vector<SupportPoint> support;
  SystemGraph graph;
  std::map<std::string, DatasetSpec> datasets;
  std::map<NodeId, TrainedModel> baseline_overrides;
  UpdateRequest update;
  std::vector<ExpectedEffect> expected_effects;
  std::optional<MonteCarloSpec> monte_carlo;
  AnalysisSpec analysis;
  std::vector<NamedSubset> subsets;
  VerdictBasis verdict_basis = VerdictBasis::test_loss;
};

ScenarioBundle build_s1_approximation();
ScenarioBundle build_s2_estimation();
ScenarioBundle build_s3_anticorrelated();
ScenarioBundle build_s4_correlated();
ScenarioBundle build_s5_loss_mismatch();
/// Update of a leaf: nothing is retrained, no verdict possible.
ScenarioBundle build_leaf_control();

struct ScenarioInfo {
  std::string id;
  std::string description;
};

/// The five shipped scenarios, in stable order.
std::vector<ScenarioInfo> list_scenarios();
std::optional<ScenarioBundle> find_scenario(const std::string& id);

struct RunOptions {
  std::uint64_t seed = 1;
  std::optional<std::size_t> trials;
  bool strict_improvement = false;
  bool range_filter = false;
  bool parallel = true;
};

inline constexpr std::uint64_t kDefaultSeed = 1;

struct EffectResult {
  ExpectedEffect effect;
  double observed = 0.0;
  bool checked = true;
  bool passed = true;
};

struct StageAnalysis {
  ModelSet models;
  std::map<NodeId, double> test_losses;
  std::map<NodeId, double> exact_risks;
  std::map<std::string, std::map<NodeId, double>> subset_test_losses;
  RiskDecomposition decomposition;
  std::optional<UpstreamDecomposition> upstream_decomposition;
  OracleFunction conditioned_oracle;
  std::optional<MonteCarloStats> monte_carlo;
};

struct ScenarioReport {
  std::string scenario_id;
  RunOptions options;
  std::size_t trials = 0;
  ValidatedGraph graph;
  GroundTruthDistribution dist;
  StageAnalysis before;
  StageAnalysis after;
  UpdateOutcome outcome;
  OracleFunction bayes_oracle;
  std::map<std::string, double> metrics;
  std::vector<EffectResult> effects;
  bool self_defeating = false;
  bool all_effects_hold = true;
};

/// Materializes datasets, trains the baseline, applies the update and
/// evaluates every declared expected effect. Deterministic per options.
ScenarioReport run_scenario(const ScenarioBundle& bundle, const RunOptions& options = {});

/// Throws expected_effect_violated naming the first failed assertion.
void require_expected_effects(const ScenarioReport& report);

GroundTruthDistribution make_distribution(const ScenarioBundle& bundle);
DatasetMap materialize_datasets(const ScenarioBundle& bundle, const GroundTruthDistribution& dist,
                                std::uint64_t seed);
/// Candidate companion models for the bundle's two-upstream analysis.
std::vector<TrainedModel> companion_candidates(const ScenarioBundle& bundle, const ValidatedGraph& graph,
                                               const GroundTruthDistribution& dist, const ModelSet& models);

}  // namespace entangle
