#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "entangle/core.hpp"
#include "entangle/loss.hpp"
#include "entangle/model_zoo.hpp"
#include "entangle/system_graph.hpp"

namespace entangle {

/// Maps a raw example to the signature an oracle conditions on.
using Featurizer = std::function<Tuple(const Example&)>;

/// Signature = raw input; the Bayes-optimal scope.
Featurizer identity_featurizer();

/// Signature = concatenated outputs of `upstreams`, each fed x[slice].
Featurizer upstream_featurizer(std::vector<TrainedModel> upstreams,
                               std::vector<std::vector<std::size_t>> slices);

/// Signature = the input `node` receives inside the system.
Featurizer node_featurizer(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node);

/// Explicit signature -> optimal output map with its exact risk.
struct OracleFunction {
  std::map<Tuple, Tuple> table;
  double risk = 0.0;
  std::string scope;

  /// Throws missing_targets for a signature that never occurs on the support.
  const Tuple& operator()(const Tuple& signature) const;
};

/// Per-group optimum of the expected loss given (target, mass) pairs.
/// zero-one: argmin over {-1,+1} (ties to -1); MAE and weighted MAE: per
/// coordinate lower weighted median; depth MAE: C over the lower weighted
/// median depth; euclidean: best of the group targets and a Weiszfeld
/// refinement.
Tuple optimal_output(const std::vector<std::pair<Tuple, double>>& targets, const LossFunction& loss);

/// w*: each distinct raw input gets its conditional optimum.
OracleFunction bayes_optimal(const GroundTruthDistribution& dist, const NodeId& task, const LossFunction& loss);

/// w-dagger: group the support by signature and take the per-group optimum.
OracleFunction conditioned_optimal(const GroundTruthDistribution& dist, const Featurizer& signature,
                                   const NodeId& task, const LossFunction& loss);

/// (signature, target, mass) for every support point.
std::vector<WeightedSample> oracle_samples(const GroundTruthDistribution& dist, const Featurizer& signature,
                                           const NodeId& task);

/// w-dagger_H: exhaustive scan of `family` minimizing exact distribution risk.
TrainedModel restricted_optimal(const GroundTruthDistribution& dist, const Featurizer& signature,
                                const HypothesisFamily& family, const NodeId& task, const LossFunction& loss);

struct CompanionResult {
  TrainedModel model;
  std::size_t index = 0;
  double downstream_risk = 0.0;
};

/// v-dagger_u: the candidate for `companion` minimizing the conditioned-optimal
/// risk of `downstream` with every other model held fixed. First candidate in
/// enumeration order wins ties. Throws empty_candidate_set.
CompanionResult optimal_companion_upstream(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                           const ModelSet& models, const NodeId& downstream,
                                           const NodeId& companion, const std::vector<TrainedModel>& candidates,
                                           const LossFunction& loss);

/// Expected loss of `f(signature(x))` under the distribution.
double distribution_risk(const GroundTruthDistribution& dist, const Featurizer& signature,
                         const std::function<Tuple(const Tuple&)>& f, const NodeId& task,
                         const LossFunction& loss);

}  // namespace entangle
