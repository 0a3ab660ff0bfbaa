#include "entangle/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "entangle/error.hpp"

namespace entangle {
namespace {

using Group = std::vector<std::pair<Tuple, double>>;

double group_loss(const Tuple& output, const Group& group, const LossFunction& loss) {
  double s = 0.0;
  for (const auto& [t, m] : group) s += m * loss(output, t);
  return s;
}

// Smallest v with cumulative mass(<= v) >= half the total.
double lower_weighted_median(std::vector<std::pair<double, double>> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (const auto& [v, m] : values) total += m;
  double cum = 0.0;
  for (const auto& [v, m] : values) {
    cum += m;
    if (cum >= 0.5 * total - 1e-15 * total) return v;
  }
  return values.back().first;
}

Tuple best_of(const std::vector<Tuple>& candidates, const Group& group, const LossFunction& loss) {
  std::vector<double> losses;
  losses.reserve(candidates.size());
  for (const auto& c : candidates) losses.push_back(group_loss(c, group, loss));
  return candidates[select_minimizer(candidates, losses)];
}

Tuple weiszfeld(const Group& group, std::size_t arity) {
  Tuple z(arity, 0.0);
  double total = 0.0;
  for (const auto& [t, m] : group) {
    for (std::size_t i = 0; i < arity; ++i) z[i] += m * t[i];
    total += m;
  }
  for (auto& v : z) v /= total;
  for (int iter = 0; iter < 500; ++iter) {
    Tuple num(arity, 0.0);
    double den = 0.0;
    for (const auto& [t, m] : group) {
      double d = 0.0;
      for (std::size_t i = 0; i < arity; ++i) d += (t[i] - z[i]) * (t[i] - z[i]);
      d = std::sqrt(d);
      if (d < 1e-15) return z;  // sitting on a data point; candidates cover this case
      for (std::size_t i = 0; i < arity; ++i) num[i] += m * t[i] / d;
      den += m / d;
    }
    double shift = 0.0;
    for (std::size_t i = 0; i < arity; ++i) {
      num[i] /= den;
      shift = std::max(shift, std::abs(num[i] - z[i]));
    }
    z = std::move(num);
    if (shift < 1e-13) break;
  }
  return z;
}

}  // namespace

Tuple optimal_output(const Group& targets, const LossFunction& loss) {
  if (targets.empty()) fail(ErrorCode::empty_support, "no targets to optimize over");
  const std::size_t arity = targets.front().first.size();
  for (const auto& [t, m] : targets) {
    if (t.size() != arity) fail(ErrorCode::arity_mismatch, "targets disagree on arity");
  }
  switch (loss.kind()) {
    case LossKind::zero_one: {
      std::set<Tuple> distinct;
      bool labels = true;
      for (const auto& [t, m] : targets) {
        distinct.insert(t);
        labels = labels && t.size() == 1 && (t[0] == kPositive || t[0] == kNegative);
      }
      if (labels) distinct.insert({{kNegative}, {kPositive}});
      return best_of({distinct.begin(), distinct.end()}, targets, loss);
    }
    case LossKind::mean_absolute_error:
    case LossKind::weighted_mean_absolute_error: {
      Tuple out(arity);
      for (std::size_t i = 0; i < arity; ++i) {
        std::vector<std::pair<double, double>> column;
        for (const auto& [t, m] : targets) column.emplace_back(t[i], m);
        out[i] = lower_weighted_median(std::move(column));
      }
      return out;
    }
    case LossKind::depth_mean_absolute_error: {
      const double c = loss.camera_constant();
      Tuple out(arity);
      for (std::size_t i = 0; i < arity; ++i) {
        std::vector<std::pair<double, double>> depths;
        for (const auto& [t, m] : targets) {
          if (!(t[i] > 0.0)) fail(ErrorCode::invalid_input, "depth loss needs positive disparity targets");
          depths.emplace_back(c / t[i], m);
        }
        out[i] = c / lower_weighted_median(std::move(depths));
      }
      return out;
    }
    case LossKind::euclidean_point_error: {
      std::set<Tuple> distinct;
      for (const auto& [t, m] : targets) distinct.insert(t);
      std::vector<Tuple> candidates(distinct.begin(), distinct.end());
      candidates.push_back(weiszfeld(targets, arity));
      return best_of(candidates, targets, loss);
    }
  }
  fail(ErrorCode::incompatible_family, "unsupported loss");
}

Featurizer identity_featurizer() {
  return [](const Example& ex) { return ex.x; };
}

Featurizer upstream_featurizer(std::vector<TrainedModel> upstreams, std::vector<std::vector<std::size_t>> slices) {
  if (upstreams.size() != slices.size()) fail(ErrorCode::arity_mismatch, "one input slice per upstream model");
  return [upstreams = std::move(upstreams), slices = std::move(slices)](const Example& ex) {
    Tuple sig;
    for (std::size_t i = 0; i < upstreams.size(); ++i) {
      Tuple in;
      for (auto j : slices[i]) in.push_back(ex.x.at(j));
      const auto out = predict(upstreams[i], in);
      sig.insert(sig.end(), out.begin(), out.end());
    }
    return sig;
  };
}

Featurizer node_featurizer(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node) {
  return [&graph, &models, node](const Example& ex) { return node_input(graph, models, node, ex.x); };
}

const Tuple& OracleFunction::operator()(const Tuple& signature) const {
  auto it = table.find(signature);
  if (it == table.end()) fail(ErrorCode::missing_targets, "oracle undefined at signature " + format_tuple(signature));
  return it->second;
}

std::vector<WeightedSample> oracle_samples(const GroundTruthDistribution& dist, const Featurizer& signature,
                                           const NodeId& task) {
  std::vector<WeightedSample> out;
  out.reserve(dist.size());
  for (const auto& p : dist.support()) out.push_back({signature(p.example), p.example.target(task), p.mass});
  return out;
}

OracleFunction conditioned_optimal(const GroundTruthDistribution& dist, const Featurizer& signature,
                                   const NodeId& task, const LossFunction& loss) {
  const auto samples = oracle_samples(dist, signature, task);
  std::map<Tuple, Group> groups;
  for (const auto& s : samples) groups[s.input].emplace_back(s.target, s.weight);
  OracleFunction f;
  f.scope = "conditioned";
  for (const auto& [sig, group] : groups) f.table.emplace(sig, optimal_output(group, loss));
  for (const auto& s : samples) f.risk += s.weight * loss(f.table.at(s.input), s.target);
  return f;
}

OracleFunction bayes_optimal(const GroundTruthDistribution& dist, const NodeId& task, const LossFunction& loss) {
  auto f = conditioned_optimal(dist, identity_featurizer(), task, loss);
  f.scope = "bayes";
  return f;
}

TrainedModel restricted_optimal(const GroundTruthDistribution& dist, const Featurizer& signature,
                                const HypothesisFamily& family, const NodeId& task, const LossFunction& loss) {
  return erm_train(family, oracle_samples(dist, signature, task), loss);
}

double distribution_risk(const GroundTruthDistribution& dist, const Featurizer& signature,
                         const std::function<Tuple(const Tuple&)>& f, const NodeId& task, const LossFunction& loss) {
  double s = 0.0;
  for (const auto& p : dist.support()) s += p.mass * loss(f(signature(p.example)), p.example.target(task));
  return s;
}

CompanionResult optimal_companion_upstream(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                           const ModelSet& models, const NodeId& downstream,
                                           const NodeId& companion, const std::vector<TrainedModel>& candidates,
                                           const LossFunction& loss) {
  if (candidates.empty()) fail(ErrorCode::empty_candidate_set, "no companion candidates for '" + companion + "'");
  if (!graph.contains(companion)) fail(ErrorCode::target_not_found, "no node '" + companion + "'");
  std::optional<CompanionResult> best;
  ModelSet trial = models;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    TrainedModel m = candidates[i];
    m.node_id = companion;
    trial.models.insert_or_assign(companion, m);
    const double risk = conditioned_optimal(dist, node_featurizer(graph, trial, downstream), downstream, loss).risk;
    if (!best || risk < best->downstream_risk - kTieTolerance) best = CompanionResult{std::move(m), i, risk};
  }
  return *best;
}

}  // namespace entangle
