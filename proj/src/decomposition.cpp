#include "entangle/decomposition.hpp"

#include "entangle/error.hpp"

namespace entangle {

RiskDecomposition decompose_two_model(const GroundTruthDistribution& dist, const Featurizer& upstream,
                                      const TrainedModel& downstream, const HypothesisFamily& family,
                                      const NodeId& task, const LossFunction& loss) {
  RiskDecomposition d;
  d.downstream_risk = distribution_risk(
      dist, upstream, [&](const Tuple& sig) { return predict(downstream, sig); }, task, loss);
  d.bayes_risk = bayes_optimal(dist, task, loss).risk;
  d.conditioned_risk = conditioned_optimal(dist, upstream, task, loss).risk;
  const auto restricted = restricted_optimal(dist, upstream, family, task, loss);
  d.restricted_risk = distribution_risk(
      dist, upstream, [&](const Tuple& sig) { return predict(restricted, sig); }, task, loss);

  d.total_excess = d.downstream_risk - d.bayes_risk;
  d.upstream_error = d.conditioned_risk - d.bayes_risk;
  d.approximation_error = d.restricted_risk - d.conditioned_risk;
  d.estimation_error = d.downstream_risk - d.restricted_risk;
  return d;
}

RiskDecomposition decompose_node(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                 const ModelSet& models, const NodeId& node) {
  const auto& spec = graph.node(node);
  return decompose_two_model(dist, node_featurizer(graph, models, node), models.at(node), spec.family, node,
                             spec.test_loss);
}

UpstreamDecomposition decompose_two_upstream(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                             const ModelSet& models, const NodeId& downstream,
                                             const NodeId& companion, const std::vector<TrainedModel>& candidates) {
  const auto& loss = graph.node(downstream).test_loss;
  const auto& parents = graph.parents(downstream);
  if (std::find(parents.begin(), parents.end(), companion) == parents.end()) {
    fail(ErrorCode::target_not_found, "'" + companion + "' is not a parent of '" + downstream + "'");
  }
  UpstreamDecomposition d;
  d.conditioned_risk = conditioned_optimal(dist, node_featurizer(graph, models, downstream), downstream, loss).risk;
  d.bayes_risk = bayes_optimal(dist, downstream, loss).risk;
  auto best = optimal_companion_upstream(dist, graph, models, downstream, companion, candidates, loss);
  d.companion_risk = best.downstream_risk;
  d.companion_index = best.index;
  d.companion = std::move(best.model);
  d.compatibility_error = d.conditioned_risk - d.companion_risk;
  d.excess_upstream_error = d.companion_risk - d.bayes_risk;
  return d;
}

}  // namespace entangle
