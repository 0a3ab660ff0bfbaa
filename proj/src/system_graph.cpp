#include "entangle/system_graph.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "entangle/error.hpp"

namespace entangle {

bool RangeFilter::accepts(const Tuple& x) const {
  if (component >= x.size()) fail(ErrorCode::invalid_slice, "range filter component out of range");
  const double v = x[component];
  return (!min || v >= *min) && (!max || v <= *max);
}

const NodeSpec& ValidatedGraph::node(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::target_not_found, "no node '" + id + "'");
  return graph_.nodes[it->second];
}

const std::vector<NodeId>& ValidatedGraph::parents(const NodeId& id) const {
  auto it = parents_.find(id);
  if (it == parents_.end()) fail(ErrorCode::target_not_found, "no node '" + id + "'");
  return it->second;
}

std::vector<NodeId> ValidatedGraph::descendants(const NodeId& id) const {
  if (!contains(id)) fail(ErrorCode::target_not_found, "no node '" + id + "'");
  std::set<NodeId> seen;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (const auto& c : children_.at(cur)) {
      if (seen.insert(c).second) stack.push_back(c);
    }
  }
  std::vector<NodeId> out;
  for (const auto& n : order_) {
    if (seen.count(n)) out.push_back(n);
  }
  return out;
}

std::vector<NodeId> ValidatedGraph::ancestors(const NodeId& id) const {
  std::set<NodeId> seen;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (const auto& p : parents(cur)) {
      if (seen.insert(p).second) stack.push_back(p);
    }
  }
  std::vector<NodeId> out;
  for (const auto& n : order_) {
    if (seen.count(n)) out.push_back(n);
  }
  return out;
}

ValidatedGraph ValidatedGraph::with_node(NodeSpec replacement) const {
  ValidatedGraph copy = *this;
  auto it = index_.find(replacement.id);
  if (it == index_.end()) fail(ErrorCode::target_not_found, "no node '" + replacement.id + "'");
  copy.graph_.nodes[it->second] = std::move(replacement);
  return copy;
}

ValidatedGraph validate(SystemGraph graph) {
  ValidatedGraph vg;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& id = graph.nodes[i].id;
    if (!vg.index_.emplace(id, i).second) fail(ErrorCode::duplicate_node_id, "node id '" + id + "' declared twice");
    vg.parents_[id];
    vg.children_[id];
  }
  std::set<std::pair<NodeId, NodeId>> seen_edges;
  for (const auto& e : graph.edges) {
    for (const auto* end : {&e.source, &e.target}) {
      if (!vg.index_.count(*end)) {
        fail(ErrorCode::dangling_edge, "edge (" + e.source + "," + e.target + ") names unknown node '" + *end + "'");
      }
    }
    if (!seen_edges.emplace(e.source, e.target).second) {
      fail(ErrorCode::duplicate_edge, "edge (" + e.source + "," + e.target + ") declared twice");
    }
    vg.parents_[e.target].push_back(e.source);
    vg.children_[e.source].push_back(e.target);
  }

  // Kahn's algorithm; among ready nodes the earliest declared goes first.
  std::map<NodeId, std::size_t> indegree;
  for (const auto& n : graph.nodes) indegree[n.id] = vg.parents_[n.id].size();
  std::set<std::size_t> ready;
  for (const auto& n : graph.nodes) {
    if (indegree[n.id] == 0) ready.insert(vg.index_[n.id]);
  }
  while (!ready.empty()) {
    const auto idx = *ready.begin();
    ready.erase(ready.begin());
    const auto& id = graph.nodes[idx].id;
    vg.order_.push_back(id);
    for (const auto& c : vg.children_[id]) {
      if (--indegree[c] == 0) ready.insert(vg.index_[c]);
    }
  }
  if (vg.order_.size() != graph.nodes.size()) {
    // Every unplaced node has an unplaced parent; walking parents must revisit a node.
    std::set<NodeId> placed(vg.order_.begin(), vg.order_.end());
    NodeId cur;
    for (const auto& n : graph.nodes) {
      if (!placed.count(n.id)) {
        cur = n.id;
        break;
      }
    }
    std::vector<NodeId> path;
    std::map<NodeId, std::size_t> position;
    while (!position.count(cur)) {
      position[cur] = path.size();
      path.push_back(cur);
      for (const auto& p : vg.parents_[cur]) {
        if (!placed.count(p)) {
          cur = p;
          break;
        }
      }
    }
    std::vector<NodeId> cycle(path.begin() + static_cast<std::ptrdiff_t>(position[cur]), path.end());
    std::reverse(cycle.begin(), cycle.end());
    std::string text;
    for (const auto& n : cycle) text += n + " -> ";
    text += cycle.front();
    fail(ErrorCode::cycle_detected, "cycle " + text);
  }
  vg.graph_ = std::move(graph);
  return vg;
}

void check_input_slices(const ValidatedGraph& graph, std::size_t input_arity) {
  for (const auto& n : graph.graph().nodes) {
    for (auto i : n.input_slice) {
      if (i >= input_arity) {
        fail(ErrorCode::invalid_slice, "node '" + n.id + "' slices component " + std::to_string(i) +
                                           " of a " + std::to_string(input_arity) + "-dimensional input");
      }
    }
    if (n.train_range_filter && n.train_range_filter->component >= input_arity) {
      fail(ErrorCode::invalid_slice, "node '" + n.id + "' range filter component out of range");
    }
  }
}

const TrainedModel& ModelSet::at(const NodeId& id) const {
  auto it = models.find(id);
  if (it == models.end()) fail(ErrorCode::missing_parent_output, "no trained model for node '" + id + "'");
  return it->second;
}

bool ModelSet::complete_for(const ValidatedGraph& graph) const {
  if (models.size() != graph.order().size()) return false;
  return std::all_of(graph.order().begin(), graph.order().end(), [&](const NodeId& n) { return models.count(n); });
}

Tuple assemble_input(const ValidatedGraph& graph, const NodeId& node, const Tuple& x,
                     const NodeOutputs& upstream_outputs) {
  const auto& spec = graph.node(node);
  Tuple input;
  input.reserve(spec.input_slice.size());
  for (auto i : spec.input_slice) {
    if (i >= x.size()) fail(ErrorCode::invalid_slice, "node '" + node + "' slice index past input end");
    input.push_back(x[i]);
  }
  for (const auto& p : graph.parents(node)) {
    auto it = upstream_outputs.find(p);
    if (it == upstream_outputs.end()) {
      fail(ErrorCode::missing_parent_output, "node '" + node + "' is missing the output of parent '" + p + "'");
    }
    input.insert(input.end(), it->second.begin(), it->second.end());
  }
  return input;
}

NodeOutputs forward(const ValidatedGraph& graph, const ModelSet& models, const Tuple& x) {
  NodeOutputs out;
  for (const auto& n : graph.order()) out[n] = predict(models.at(n), assemble_input(graph, n, x, out));
  return out;
}

NodeOutputs forward_ancestors(const ValidatedGraph& graph, const ModelSet& models, const Tuple& x,
                              const NodeId& node) {
  NodeOutputs out;
  for (const auto& n : graph.ancestors(node)) out[n] = predict(models.at(n), assemble_input(graph, n, x, out));
  return out;
}

Tuple node_input(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node, const Tuple& x) {
  return assemble_input(graph, node, x, forward_ancestors(graph, models, x, node));
}

std::vector<WeightedSample> training_samples(const ValidatedGraph& graph, const ModelSet& upstream,
                                             const NodeId& node, const Dataset& train_set,
                                             bool range_filter_enabled) {
  const auto& spec = graph.node(node);
  std::vector<WeightedSample> items;
  for (const auto& ex : train_set.items) {
    if (range_filter_enabled && spec.train_range_filter && !spec.train_range_filter->accepts(ex.x)) continue;
    items.push_back({node_input(graph, upstream, node, ex.x), ex.target(node), 1.0});
  }
  const double w = items.empty() ? 0.0 : 1.0 / static_cast<double>(items.size());
  for (auto& item : items) item.weight = w;
  return items;
}

TrainedModel run_trainer(const NodeSpec& node, std::span<const WeightedSample> items, Rng& /*rng*/) {
  try {
    TrainedModel model = [&] {
      if (node.trainer.kind == TrainerSpec::Kind::fixed) {
        if (!node.trainer.model) fail(ErrorCode::trainer_failed, "fixed trainer without a model");
        return *node.trainer.model;
      }
      if (items.empty()) fail(ErrorCode::degenerate_sample, "no training items");
      if (node.family.is_classifier() && std::all_of(items.begin(), items.end(), [&](const WeightedSample& s) {
            return s.target == items.front().target;
          })) {
        if (!node.trainer.constant_on_single_class) {
          fail(ErrorCode::degenerate_sample, "training items contain a single class");
        }
        return make_constant_model(items.front().target.at(0));
      }
      return erm_train(node.family, items, node.trainer.objective.value_or(node.test_loss), node.trainer.tie_break);
    }();
    model.node_id = node.id;
    return model;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::trainer_failed) throw;
    fail(ErrorCode::trainer_failed, "node '" + node.id + "': " + e.what());
  }
}

namespace {

const Dataset& dataset_for(const DatasetMap& datasets, const std::string& name, const NodeId& node) {
  auto it = datasets.find(name);
  if (it == datasets.end()) fail(ErrorCode::trainer_failed, "node '" + node + "' names unknown train set '" + name + "'");
  return it->second;
}

}  // namespace

ModelSet train_system(const ValidatedGraph& graph, const DatasetMap& datasets, std::uint64_t seed,
                      const TrainOptions& options) {
  ModelSet result;
  auto train_one = [&](const NodeId& id, const ModelSet& upstream) -> TrainedModel {
    if (auto it = options.overrides.find(id); it != options.overrides.end()) {
      TrainedModel m = it->second;
      m.node_id = id;
      return m;
    }
    const auto& spec = graph.node(id);
    Rng rng(derive_seed(seed, id));
    if (spec.trainer.kind == TrainerSpec::Kind::fixed) return run_trainer(spec, {}, rng);
    const auto items =
        training_samples(graph, upstream, id, dataset_for(datasets, spec.train_set, id), options.range_filter_enabled);
    return run_trainer(spec, items, rng);
  };

  if (!options.parallel) {
    for (const auto& id : graph.order()) {
      auto model = train_one(id, result);
      result.models.emplace(id, std::move(model));
      if (options.on_trained) options.on_trained(id);
    }
    return result;
  }

  // Wavefront: every node whose parents are trained runs concurrently.
  std::set<NodeId> done;
  while (done.size() < graph.order().size()) {
    std::vector<NodeId> wave;
    for (const auto& id : graph.order()) {
      if (done.count(id)) continue;
      const auto& ps = graph.parents(id);
      if (std::all_of(ps.begin(), ps.end(), [&](const NodeId& p) { return done.count(p) != 0; })) wave.push_back(id);
    }
    std::vector<std::future<TrainedModel>> jobs;
    for (const auto& id : wave) jobs.push_back(std::async(std::launch::async, train_one, id, std::cref(result)));
    std::vector<TrainedModel> trained;
    for (auto& j : jobs) trained.push_back(j.get());
    for (std::size_t i = 0; i < wave.size(); ++i) {
      result.models.emplace(wave[i], std::move(trained[i]));
      done.insert(wave[i]);
      if (options.on_trained) options.on_trained(wave[i]);
    }
  }
  return result;
}

double test_loss(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node, const Dataset& dataset) {
  if (dataset.items.empty()) fail(ErrorCode::invalid_dataset, "empty test set for node '" + node + "'");
  const auto& loss = graph.node(node).test_loss;
  double s = 0.0;
  for (const auto& ex : dataset.items) {
    const auto input = node_input(graph, models, node, ex.x);
    s += loss(predict(models.at(node), input), ex.target(node));
  }
  return s / static_cast<double>(dataset.items.size());
}

double exact_risk(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node,
                  const GroundTruthDistribution& dist, const LossFunction& loss) {
  double s = 0.0;
  for (const auto& p : dist.support()) {
    const auto input = node_input(graph, models, node, p.example.x);
    s += p.mass * loss(predict(models.at(node), input), p.example.target(node));
  }
  return s;
}

}  // namespace entangle
