#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "entangle/core.hpp"
#include "entangle/model_zoo.hpp"
#include "entangle/oracles.hpp"
#include "entangle/system_graph.hpp"

namespace entangle {

/// Downstream excess risk split into upstream, approximation and estimation
/// terms. The four underlying exact risks are kept so reports can show them.
struct RiskDecomposition {
  double downstream_risk = 0.0;   // w o v
  double bayes_risk = 0.0;        // w*
  double conditioned_risk = 0.0;  // w-dagger o v
  double restricted_risk = 0.0;   // w-dagger_H o v

  double total_excess = 0.0;
  double upstream_error = 0.0;
  double approximation_error = 0.0;
  double estimation_error = 0.0;

  double residual() const noexcept {
    return upstream_error + approximation_error + estimation_error - total_excess;
  }
};

struct UpstreamDecomposition {
  double conditioned_risk = 0.0;  // w-dagger o (u, v)
  double companion_risk = 0.0;    // w-dagger o (u, v-dagger_u)
  double bayes_risk = 0.0;
  std::size_t companion_index = 0;
  TrainedModel companion = make_constant_model(kNegative);

  double compatibility_error = 0.0;
  double excess_upstream_error = 0.0;

  double upstream_error() const noexcept { return conditioned_risk - bayes_risk; }
};

RiskDecomposition decompose_two_model(const GroundTruthDistribution& dist, const Featurizer& upstream,
                                      const TrainedModel& downstream, const HypothesisFamily& family,
                                      const NodeId& task, const LossFunction& loss);

/// Graph form: `node`'s parents act as the (merged) upstream; family and loss
/// come from the node spec.
RiskDecomposition decompose_node(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                 const ModelSet& models, const NodeId& node);

/// Splits the upstream error of `downstream` with `companion` re-optimized
/// over `candidates` and all other upstreams held fixed. Each risk uses the
/// conditioned optimum for its own upstream pair.
UpstreamDecomposition decompose_two_upstream(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                             const ModelSet& models, const NodeId& downstream,
                                             const NodeId& companion, const std::vector<TrainedModel>& candidates);

// ---------------------------------------------------------------------------
// Update protocol

struct UpdateRequest {
  struct NewTrainSet {
    std::string dataset;
  };
  using Replacement = std::variant<TrainerSpec, TrainedModel, HypothesisFamily, NewTrainSet>;

  NodeId target;
  Replacement replacement;
  std::uint64_t retrain_seed = 0;
};

struct UpdateOptions {
  /// Non-strict improvement at the target by default.
  bool strict_improvement = false;
  bool range_filter_enabled = false;
  /// Absolute slack on the exact losses compared on both sides.
  double tolerance = 1e-9;
};

struct UpdateOutcome {
  std::map<NodeId, double> before;
  std::map<NodeId, double> after;
  std::vector<NodeId> retrained;
  std::set<NodeId> self_defeating_nodes;
  bool improvement_held = false;

  ValidatedGraph graph_after;
  ModelSet models_after;
};

/// Installs the replacement, retrains exactly the descendants of the target
/// in topological order (inputs regenerated through the updated upstream),
/// and compares fixed test losses before and after.
UpdateOutcome apply_update(const ValidatedGraph& graph, const ModelSet& models, const UpdateRequest& request,
                           const DatasetMap& datasets, const UpdateOptions& options = {});

/// Nodes flagged by the self-defeating-improvement rule given the losses.
std::set<NodeId> detect_self_defeating(const std::map<NodeId, double>& before,
                                       const std::map<NodeId, double>& after, const NodeId& target,
                                       const std::vector<NodeId>& retrained, const UpdateOptions& options,
                                       bool* improvement_held = nullptr);

// ---------------------------------------------------------------------------
// Monte-Carlo estimate of the expected downstream risk for a finite sample

struct MonteCarloOptions {
  bool parallel = true;
  bool range_filter_enabled = false;
};

struct MonteCarloStats {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
  std::size_t sample_size = 0;
  std::size_t single_class_trials = 0;
  std::vector<double> risks;
};

/// Each trial draws `sample_size` raw examples from `dist` by mass (with
/// replacement), retrains `node` through the current upstream models, and
/// records the exact distribution risk. Trial t uses derive_seed(seed, t).
MonteCarloStats expected_downstream_risk(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                         const ModelSet& models, const NodeId& node, std::size_t sample_size,
                                         std::size_t trials, std::uint64_t seed,
                                         const MonteCarloOptions& options = {});

double pooled_standard_error(const MonteCarloStats& a, const MonteCarloStats& b) noexcept;

/// Draws `count` support indices by mass.
std::vector<std::size_t> draw_support_indices(const GroundTruthDistribution& dist, std::size_t count, Rng& rng);

}  // namespace entangle
