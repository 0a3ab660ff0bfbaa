#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include "entangle/decomposition.hpp"
#include "entangle/error.hpp"

namespace entangle {

std::vector<std::size_t> draw_support_indices(const GroundTruthDistribution& dist, std::size_t count, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(dist.size());
  double acc = 0.0;
  for (const auto& p : dist.support()) cumulative.push_back(acc += p.mass);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = sample_index(rng, cumulative);
  return out;
}

double pooled_standard_error(const MonteCarloStats& a, const MonteCarloStats& b) noexcept {
  return std::sqrt(a.standard_error * a.standard_error + b.standard_error * b.standard_error);
}

MonteCarloStats expected_downstream_risk(const GroundTruthDistribution& dist, const ValidatedGraph& graph,
                                         const ModelSet& models, const NodeId& node, std::size_t sample_size,
                                         std::size_t trials, std::uint64_t seed, const MonteCarloOptions& options) {
  if (trials < 1) fail(ErrorCode::invalid_dataset, "monte carlo needs at least one trial");
  if (sample_size < 1) fail(ErrorCode::invalid_dataset, "monte carlo needs a positive sample size");
  const auto& spec = graph.node(node);
  const auto& loss = spec.test_loss;

  // Upstream outputs do not depend on the trial; compute every support
  // point's input for `node` once.
  std::vector<Tuple> inputs;
  inputs.reserve(dist.size());
  for (const auto& p : dist.support()) inputs.push_back(node_input(graph, models, node, p.example.x));

  MonteCarloStats stats;
  stats.trials = trials;
  stats.sample_size = sample_size;
  stats.risks.assign(trials, 0.0);
  std::vector<char> single_class(trials, 0);

  auto run_trial = [&](std::size_t t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const auto idx = draw_support_indices(dist, sample_size, rng);
    std::vector<WeightedSample> items;
    items.reserve(sample_size);
    for (auto i : idx) {
      const auto& ex = dist.support()[i].example;
      if (options.range_filter_enabled && spec.train_range_filter && !spec.train_range_filter->accepts(ex.x)) continue;
      items.push_back({inputs[i], ex.target(node), 1.0});
    }
    for (auto& it : items) it.weight = 1.0 / static_cast<double>(items.size());
    single_class[t] = items.empty() || std::all_of(items.begin(), items.end(), [&](const WeightedSample& s) {
      return s.target == items.front().target;
    });
    Rng trainer_rng(derive_seed(seed ^ 0x5bd1e995ULL, static_cast<std::uint64_t>(t)));
    // A draw the range filter empties leaves the node untrained; it then
    // predicts the negative class, as a table does for an unseen key.
    const auto model = items.empty() && spec.family.is_classifier() ? make_constant_model(kNegative)
                                                                    : run_trainer(spec, items, trainer_rng);
    double r = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      r += dist.support()[i].mass * loss(predict(model, inputs[i]), dist.support()[i].example.target(node));
    }
    stats.risks[t] = r;
  };

  const std::size_t workers =
      options.parallel ? std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), trials))
                       : 1;
  if (workers == 1) {
    for (std::size_t t = 0; t < trials; ++t) run_trial(t);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t t = w; t < trials; t += workers) run_trial(t);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  // The reduction runs in trial order regardless of scheduling.
  double sum = 0.0;
  for (double r : stats.risks) sum += r;
  stats.mean = sum / static_cast<double>(trials);
  if (trials > 1) {
    double ss = 0.0;
    for (double r : stats.risks) ss += (r - stats.mean) * (r - stats.mean);
    stats.standard_error = std::sqrt(ss / static_cast<double>(trials - 1) / static_cast<double>(trials));
  }
  stats.single_class_trials = static_cast<std::size_t>(std::count(single_class.begin(), single_class.end(), 1));
  return stats;
}

}  // namespace entangle
