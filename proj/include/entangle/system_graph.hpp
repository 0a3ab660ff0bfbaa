#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "entangle/core.hpp"
#include "entangle/loss.hpp"
#include "entangle/model_zoo.hpp"
#include "entangle/rng.hpp"

namespace entangle {

struct TrainerSpec {
  enum class Kind { erm, fixed };

  Kind kind = Kind::erm;
  /// Training objective for ERM; the node's test loss when unset.
  std::optional<LossFunction> objective;
  TieBreak tie_break = TieBreak::lexicographic;
  /// Single-class training data yields the constant classifier when true,
  /// otherwise training fails with degenerate_sample.
  bool constant_on_single_class = true;
  /// Model installed by the fixed trainer.
  std::optional<TrainedModel> model;

  static TrainerSpec erm(std::optional<LossFunction> objective = std::nullopt) {
    TrainerSpec t;
    t.objective = std::move(objective);
    return t;
  }
  static TrainerSpec fixed(TrainedModel model) {
    TrainerSpec t;
    t.kind = Kind::fixed;
    t.model = std::move(model);
    return t;
  }
};

/// Keeps raw examples whose x[component] lies in [min, max].
struct RangeFilter {
  std::size_t component = 0;
  std::optional<double> min;
  std::optional<double> max;

  bool accepts(const Tuple& x) const;
};

struct NodeSpec {
  NodeId id;
  std::vector<std::size_t> input_slice;
  HypothesisFamily family = TableFamily{};
  TrainerSpec trainer;
  std::string train_set;
  std::string test_set;
  LossFunction test_loss = LossFunction::zero_one();
  /// Applied to training examples only when range filtering is enabled.
  std::optional<RangeFilter> train_range_filter;
};

struct Edge {
  NodeId source;
  NodeId target;
  bool operator==(const Edge&) const = default;
};

struct SystemGraph {
  std::vector<NodeSpec> nodes;
  std::vector<Edge> edges;
};

/// A SystemGraph that passed validation, with its topological order and
/// per-node parent lists (parents in edge declaration order).
class ValidatedGraph {
 public:
  const SystemGraph& graph() const noexcept { return graph_; }
  const std::vector<NodeId>& order() const noexcept { return order_; }
  const NodeSpec& node(const NodeId& id) const;
  bool contains(const NodeId& id) const { return index_.count(id) != 0; }
  const std::vector<NodeId>& parents(const NodeId& id) const;
  /// Strict descendants in topological order.
  std::vector<NodeId> descendants(const NodeId& id) const;
  /// Strict ancestors in topological order.
  std::vector<NodeId> ancestors(const NodeId& id) const;

  /// Copy with one node spec replaced (same id, same edges).
  ValidatedGraph with_node(NodeSpec replacement) const;

 private:
  friend ValidatedGraph validate(SystemGraph graph);

  SystemGraph graph_;
  std::vector<NodeId> order_;
  std::map<NodeId, std::size_t> index_;
  std::map<NodeId, std::vector<NodeId>> parents_;
  std::map<NodeId, std::vector<NodeId>> children_;
};

/// Throws duplicate_node_id, duplicate_edge, dangling_edge, or cycle_detected
/// (the message lists one cycle). Ties in the topological order follow node
/// declaration order.
ValidatedGraph validate(SystemGraph graph);

/// Throws invalid_slice if any node slice indexes past `input_arity`.
void check_input_slices(const ValidatedGraph& graph, std::size_t input_arity);

struct ModelSet {
  std::map<NodeId, TrainedModel> models;
  int version = 0;

  const TrainedModel& at(const NodeId& id) const;
  bool complete_for(const ValidatedGraph& graph) const;
};

using NodeOutputs = std::map<NodeId, Tuple>;
using DatasetMap = std::map<std::string, Dataset>;

/// [x[slice...], outputs of parents in declared order...]. Throws
/// missing_parent_output when a parent has no entry in `upstream_outputs`.
Tuple assemble_input(const ValidatedGraph& graph, const NodeId& node, const Tuple& x,
                     const NodeOutputs& upstream_outputs);

/// Every node's output in topological order.
NodeOutputs forward(const ValidatedGraph& graph, const ModelSet& models, const Tuple& x);

/// Outputs of the strict ancestors of `node` only; only those models are needed.
NodeOutputs forward_ancestors(const ValidatedGraph& graph, const ModelSet& models, const Tuple& x,
                              const NodeId& node);

/// The input `node` receives for raw input `x`; the signature seen by its model.
Tuple node_input(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node, const Tuple& x);

struct TrainOptions {
  bool range_filter_enabled = false;
  /// Train nodes whose parents are all trained concurrently. Results are
  /// identical to serial execution.
  bool parallel = false;
  /// Models installed instead of running the node's trainer.
  std::map<NodeId, TrainedModel> overrides;
  /// When set, receives node ids in the order their training finished.
  std::function<void(const NodeId&)> on_trained;
};

/// Training items for `node`: raw training examples pushed through the
/// already-trained upstream models, uniformly weighted.
std::vector<WeightedSample> training_samples(const ValidatedGraph& graph, const ModelSet& upstream,
                                             const NodeId& node, const Dataset& train_set,
                                             bool range_filter_enabled);

/// Runs the node's trainer. Throws trainer_failed carrying the node id.
TrainedModel run_trainer(const NodeSpec& node, std::span<const WeightedSample> items, Rng& rng);

/// Trains all nodes in topological order. Pure function of its arguments;
/// each node draws from its own stream derived from (seed, node id).
ModelSet train_system(const ValidatedGraph& graph, const DatasetMap& datasets, std::uint64_t seed,
                      const TrainOptions& options = {});

/// Mean test loss of `node` over `dataset` with the system's current models.
double test_loss(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node,
                 const Dataset& dataset);

/// Exact expected loss of `node` under `dist`.
double exact_risk(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node,
                  const GroundTruthDistribution& dist, const LossFunction& loss);

}  // namespace entangle
