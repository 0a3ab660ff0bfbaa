#include <algorithm>
#include <set>

#include "entangle/decomposition.hpp"
#include "entangle/error.hpp"

namespace entangle {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::map<NodeId, double> all_test_losses(const ValidatedGraph& graph, const ModelSet& models,
                                         const DatasetMap& datasets) {
  std::map<NodeId, double> out;
  for (const auto& id : graph.order()) {
    const auto& name = graph.node(id).test_set;
    auto it = datasets.find(name);
    if (it == datasets.end()) fail(ErrorCode::invalid_dataset, "node '" + id + "' names unknown test set '" + name + "'");
    out[id] = test_loss(graph, models, id, it->second);
  }
  return out;
}

}  // namespace

std::set<NodeId> detect_self_defeating(const std::map<NodeId, double>& before, const std::map<NodeId, double>& after,
                                       const NodeId& target, const std::vector<NodeId>& retrained,
                                       const UpdateOptions& options, bool* improvement_held) {
  const double tb = before.at(target);
  const double ta = after.at(target);
  const bool improved = options.strict_improvement ? ta < tb - options.tolerance : ta <= tb + options.tolerance;
  if (improvement_held) *improvement_held = improved;
  std::set<NodeId> flagged;
  if (!improved) return flagged;
  for (const auto& w : retrained) {
    if (after.at(w) > before.at(w) + options.tolerance) flagged.insert(w);
  }
  return flagged;
}

UpdateOutcome apply_update(const ValidatedGraph& graph, const ModelSet& models, const UpdateRequest& request,
                           const DatasetMap& datasets, const UpdateOptions& options) {
  if (!graph.contains(request.target)) fail(ErrorCode::target_not_found, "no node '" + request.target + "'");
  if (!models.complete_for(graph)) fail(ErrorCode::missing_parent_output, "model set is incomplete for the graph");

  UpdateOutcome out;
  out.before = all_test_losses(graph, models, datasets);

  NodeSpec target = graph.node(request.target);
  std::optional<TrainedModel> installed;
  std::visit(overloaded{
                 [&](const TrainedModel& m) { installed = m; },
                 [&](const TrainerSpec& t) { target.trainer = t; },
                 [&](const HypothesisFamily& f) { target.family = f; },
                 [&](const UpdateRequest::NewTrainSet& s) {
                   if (!datasets.count(s.dataset)) {
                     fail(ErrorCode::incompatible_replacement, "unknown train set '" + s.dataset + "'");
                   }
                   target.train_set = s.dataset;
                 },
             },
             request.replacement);
  if (installed) {
    // The model must evaluate on the target's inputs; probe with the first test example.
    const auto& probe = datasets.at(target.test_set).items.front();
    try {
      predict(*installed, node_input(graph, models, target.id, probe.x));
    } catch (const Error& e) {
      fail(ErrorCode::incompatible_replacement, "replacement for '" + target.id + "' " + e.what());
    }
  }
  out.graph_after = graph.with_node(target);
  out.models_after = models;
  out.models_after.version = models.version + 1;

  auto retrain = [&](const NodeId& id) {
    Rng rng(derive_seed(request.retrain_seed, id));
    const auto& spec = out.graph_after.node(id);
    const auto& ds = datasets.at(spec.train_set);
    const auto items = spec.trainer.kind == TrainerSpec::Kind::fixed
                           ? std::vector<WeightedSample>{}
                           : training_samples(out.graph_after, out.models_after, id, ds, options.range_filter_enabled);
    return run_trainer(spec, items, rng);
  };

  TrainedModel replacement = installed ? *installed : retrain(target.id);
  replacement.node_id = target.id;
  replacement.version = out.models_after.version;
  out.models_after.models.insert_or_assign(target.id, std::move(replacement));

  out.retrained = graph.descendants(request.target);
  for (const auto& id : out.retrained) {
    if (!datasets.count(out.graph_after.node(id).train_set)) {
      fail(ErrorCode::trainer_failed, "node '" + id + "' names unknown train set");
    }
    TrainedModel m = retrain(id);
    m.version = out.models_after.version;
    out.models_after.models.insert_or_assign(id, std::move(m));
  }

  out.after = all_test_losses(out.graph_after, out.models_after, datasets);
  out.self_defeating_nodes =
      detect_self_defeating(out.before, out.after, request.target, out.retrained, options, &out.improvement_held);
  return out;
}

}  // namespace entangle
