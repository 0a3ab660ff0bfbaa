#include "entangle/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "entangle/error.hpp"

namespace entangle {
namespace {

constexpr double kPlus = kPositive;
constexpr double kMinus = kNegative;

Example make_example(Tuple x, std::map<NodeId, Tuple> targets) { return Example{std::move(x), std::move(targets)}; }

NodeSpec fixed_node(NodeId id, std::vector<std::size_t> slice, HypothesisFamily family, TrainedModel model,
                    LossFunction loss) {
  NodeSpec n;
  n.id = std::move(id);
  n.input_slice = std::move(slice);
  n.family = std::move(family);
  n.trainer = TrainerSpec::fixed(std::move(model));
  n.train_set = "train";
  n.test_set = "test";
  n.test_loss = std::move(loss);
  return n;
}

NodeSpec erm_node(NodeId id, std::vector<std::size_t> slice, HypothesisFamily family, LossFunction loss,
                  std::string train_set = "train") {
  NodeSpec n;
  n.id = std::move(id);
  n.input_slice = std::move(slice);
  n.family = std::move(family);
  n.trainer = TrainerSpec::erm();
  n.train_set = std::move(train_set);
  n.test_set = "test";
  n.test_loss = std::move(loss);
  return n;
}

DatasetSpec support_set(DatasetRole role, std::size_t resolution) {
  DatasetSpec d;
  d.kind = DatasetSpec::Kind::support;
  d.role = role;
  d.resolution = resolution;
  return d;
}

ExpectedEffect effect(std::string description, std::string metric, Comparison op, double value,
                      double tolerance = 1e-12) {
  return ExpectedEffect{std::move(description), std::move(metric), op, value, tolerance, std::nullopt};
}

LookupTable binary_table(const std::vector<double>& labels) {
  LookupTable t;
  for (std::size_t i = 0; i < labels.size(); ++i) t[{static_cast<double>(i)}] = {labels[i]};
  return t;
}

// Shared layout of the two four-point signature-table scenarios: u and v
// read the point index, w reads only (f_u, f_v).
ScenarioBundle four_point_bundle(std::string id, std::string description, const std::vector<double>& masses,
                                 std::size_t resolution, const std::vector<double>& y_u,
                                 const std::vector<double>& y_v, const std::vector<double>& y_w,
                                 const std::vector<double>& u, const std::vector<double>& v,
                                 const std::vector<double>& u_new) {
  ScenarioBundle b;
  b.id = std::move(id);
  b.description = std::move(description);
  for (std::size_t i = 0; i < masses.size(); ++i) {
    b.support.push_back(
        {make_example({static_cast<double>(i)}, {{"u", {y_u[i]}}, {"v", {y_v[i]}}, {"w", {y_w[i]}}}), masses[i]});
  }
  const auto zero_one = LossFunction::zero_one();
  b.graph.nodes = {
      fixed_node("u", {0}, TableFamily{}, make_table_model(TableFamily{}, binary_table(u)), zero_one),
      fixed_node("v", {0}, TableFamily{}, make_table_model(TableFamily{}, binary_table(v)), zero_one),
      erm_node("w", {}, TableFamily{}, zero_one),
  };
  b.graph.edges = {{"u", "w"}, {"v", "w"}};
  b.datasets["train"] = support_set(DatasetRole::train, resolution);
  b.datasets["test"] = support_set(DatasetRole::test, resolution);
  b.update.target = "u";
  b.update.replacement = make_table_model(TableFamily{}, binary_table(u_new));
  b.analysis.downstream = "w";
  b.analysis.companion = CompanionSpec{"v", {}};
  b.analysis.agreement_pairs = {{"u", "v"}};
  return b;
}

Tuple ring_point(double radius, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  return {radius * std::cos(a), radius * std::sin(a)};
}

}  // namespace

ScenarioBundle build_s1_approximation() {
  ScenarioBundle b;
  b.id = "S1-approximation";
  b.description = "exact positions break a linear downstream that only separated the collapsed outputs";
  // Targets: green iff px * py > 0.
  const std::vector<Tuple> positions = {{1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}, {-1.0, 1.0}};
  LookupTable collapsed;
  LookupTable exact;
  for (const auto& p : positions) {
    const double label = p[0] * p[1] > 0 ? kPlus : kMinus;
    b.support.push_back({make_example(p, {{"v", p}, {"w", {label}}}), 0.25});
    collapsed[p] = label > 0 ? Tuple{1.0, 1.0} : Tuple{-1.0, -1.0};
    exact[p] = p;
  }
  const HypothesisFamily points = PointPredictorTable{2};
  b.graph.nodes = {
      fixed_node("v", {0, 1}, points, make_table_model(points, collapsed), LossFunction::euclidean_point_error()),
      erm_node("w", {}, LinearClassifier2d{}, LossFunction::zero_one()),
  };
  b.graph.edges = {{"v", "w"}};
  b.datasets["train"] = support_set(DatasetRole::train, 4);
  b.datasets["test"] = support_set(DatasetRole::test, 4);
  b.update.target = "v";
  b.update.replacement = make_table_model(points, exact);
  b.analysis.downstream = "w";

  b.expected_effects = {
      effect("upstream loss before is (4 + 2 sqrt 2) / 4", "test_loss.before.v", Comparison::eq,
             (4.0 + 2.0 * std::numbers::sqrt2) / 4.0, 1e-9),
      effect("upstream loss after is zero", "test_loss.after.v", Comparison::eq, 0.0, 1e-9),
      effect("downstream risk before is zero", "test_loss.before.w", Comparison::eq, 0.0),
      effect("downstream risk after is one quarter", "test_loss.after.w", Comparison::eq, 0.25),
      effect("upstream error after is zero", "decomposition.after.upstream_error", Comparison::eq, 0.0),
      effect("approximation error after is one quarter", "decomposition.after.approximation_error",
             Comparison::eq, 0.25),
      effect("estimation error after is zero", "decomposition.after.estimation_error", Comparison::eq, 0.0),
      effect("self-defeating", "verdict", Comparison::eq, 1.0),
  };
  return b;
}

// Reds sit between the greens' angles; a shared angle lets a single line
// through the center separate a ring sample more often.
inline constexpr double kS2RedOffsetDegrees = 22.5;

ScenarioBundle build_s2_estimation() {
  ScenarioBundle b;
  b.id = "S2-estimation";
  b.description = "a wide-margin upstream lets six samples generalize; exact positions do not";
  LookupTable spread;
  LookupTable exact;
  auto add = [&](double radius, double mapped_radius, double degrees, double label) {
    const Tuple p = ring_point(radius, degrees);
    b.support.push_back({make_example(p, {{"v", p}, {"w", {label}}}), 1.0 / 16.0});
    spread[p] = ring_point(mapped_radius, degrees);
    exact[p] = p;
  };
  for (int k = 0; k < 8; ++k) add(1.0, 0.2, 45.0 * k, kPlus);
  for (int k = 0; k < 8; ++k) add(1.6, 3.0, 45.0 * k + kS2RedOffsetDegrees, kMinus);

  const HypothesisFamily points = PointPredictorTable{2};
  b.graph.nodes = {
      fixed_node("v", {0, 1}, points, make_table_model(points, spread), LossFunction::euclidean_point_error()),
      erm_node("w", {}, QuadraticClassifier2d{}, LossFunction::zero_one(), "train_w"),
  };
  b.graph.edges = {{"v", "w"}};
  b.datasets["train"] = support_set(DatasetRole::train, 16);
  b.datasets["test"] = support_set(DatasetRole::test, 16);
  DatasetSpec small;
  small.kind = DatasetSpec::Kind::sample;
  small.role = DatasetRole::train;
  small.size = 6;
  b.datasets["train_w"] = small;
  b.update.target = "v";
  b.update.replacement = make_table_model(points, exact);
  b.monte_carlo = MonteCarloSpec{"w", 6, 1000};
  b.analysis.downstream = "w";
  b.verdict_basis = VerdictBasis::monte_carlo;

  b.expected_effects = {
      effect("upstream loss strictly decreases", "test_loss.delta.v", Comparison::lt, 0.0),
      effect("upstream loss after is zero", "test_loss.after.v", Comparison::eq, 0.0, 1e-9),
      effect("expected downstream risk grows by at least 0.05", "monte_carlo.gap", Comparison::ge, 0.05),
      effect("growth exceeds two pooled standard errors", "monte_carlo.gap_in_se", Comparison::ge, 2.0),
      effect("upstream error after is zero", "decomposition.after.upstream_error", Comparison::eq, 0.0),
      effect("estimation term carries the growth", "monte_carlo.expected_estimation_error_delta", Comparison::ge,
             0.05),
      effect("self-defeating", "verdict", Comparison::eq, 1.0),
  };
  return b;
}

ScenarioBundle build_s3_anticorrelated() {
  // y_u = (+,+,-,-), v errs on p4, u errs on p2, so (u, v) separates what w
  // needs; fixing u merges p1 and p2.
  auto b = four_point_bundle(
      "S3-anticorrelated", "fixing one upstream removes an error the other upstream was compensating for",
      {0.125, 0.25, 0.375, 0.25}, 8, {kPlus, kPlus, kMinus, kMinus}, {kPlus, kPlus, kMinus, kMinus},
      {kPlus, kMinus, kPlus, kMinus}, {kPlus, kMinus, kMinus, kMinus}, {kPlus, kPlus, kMinus, kPlus},
      {kPlus, kPlus, kMinus, kMinus});
  b.expected_effects = {
      effect("upstream loss before is one quarter", "test_loss.before.u", Comparison::eq, 0.25),
      effect("upstream loss after is zero", "test_loss.after.u", Comparison::eq, 0.0),
      effect("downstream risk before is zero", "test_loss.before.w", Comparison::eq, 0.0),
      effect("downstream risk after is one eighth", "test_loss.after.w", Comparison::eq, 0.125),
      effect("compatibility error before is zero", "upstream_decomposition.before.compatibility_error",
             Comparison::eq, 0.0),
      effect("compatibility error after is one eighth", "upstream_decomposition.after.compatibility_error",
             Comparison::eq, 0.125),
      effect("excess upstream error after is zero", "upstream_decomposition.after.excess_upstream_error",
             Comparison::eq, 0.0),
      effect("self-defeating", "verdict", Comparison::eq, 1.0),
  };
  return b;
}

ScenarioBundle build_s4_correlated() {
  auto b = four_point_bundle(
      "S4-correlated", "an upstream that copies its sibling gains accuracy and loses the downstream's signal",
      {0.30, 0.20, 0.25, 0.25}, 20, {kPlus, kPlus, kMinus, kMinus}, {kPlus, kPlus, kMinus, kPlus},
      {kPlus, kMinus, kPlus, kPlus}, {kMinus, kPlus, kMinus, kMinus}, {kPlus, kPlus, kMinus, kPlus},
      {kPlus, kPlus, kMinus, kPlus});
  b.expected_effects = {
      effect("upstream loss before is 0.30", "test_loss.before.u", Comparison::eq, 0.30, 1e-12),
      effect("upstream loss after is 0.25", "test_loss.after.u", Comparison::eq, 0.25, 1e-12),
      effect("downstream risk before is zero", "test_loss.before.w", Comparison::eq, 0.0),
      effect("downstream risk after is 0.20", "test_loss.after.w", Comparison::eq, 0.20, 1e-12),
      effect("updated u agrees with v everywhere", "agreement.after.u.v", Comparison::eq, 1.0),
      effect("compatibility error after is 0.20", "upstream_decomposition.after.compatibility_error",
             Comparison::eq, 0.20, 1e-12),
      effect("self-defeating", "verdict", Comparison::eq, 1.0),
  };
  return b;
}

inline constexpr double kCameraConstant = 400.0;

ScenarioBundle build_s5_loss_mismatch() {
  ScenarioBundle b;
  b.id = "S5-loss-mismatch";
  b.description = "a disparity-trained upstream trades far-range accuracy and breaks a far-object detector";
  struct Point {
    double depth;
    double present;
  };
  // Two near points without a far object, two far points with one.
  const std::vector<Point> points = {{10.0, kMinus}, {10.0, kMinus}, {40.0, kPlus}, {40.0, kPlus}};
  // A is right on far points; B is right on near points and on one far point.
  const std::vector<double> base_a = {60.0, 60.0, 10.0, 10.0};
  const std::vector<double> base_b = {40.0, 40.0, 40.0, 10.0};
  InterpolatedPredictor family;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double disparity = kCameraConstant / points[i].depth;
    b.support.push_back({make_example({static_cast<double>(i), points[i].depth},
                                      {{"u", {disparity}}, {"w", {points[i].present}}}),
                         0.25});
    family.base_a[{static_cast<double>(i)}] = {base_a[i]};
    family.base_b[{static_cast<double>(i)}] = {base_b[i]};
  }
  NodeSpec u = erm_node("u", {0}, family, LossFunction::mean_absolute_error());
  u.trainer = TrainerSpec::erm(LossFunction::depth_mean_absolute_error(kCameraConstant));
  NodeSpec w = erm_node("w", {}, ThresholdDetector1d{}, LossFunction::zero_one());
  w.train_range_filter = RangeFilter{1, std::nullopt, 20.0};
  b.graph.nodes = {u, w};
  b.graph.edges = {{"u", "w"}};
  b.datasets["train"] = support_set(DatasetRole::train, 4);
  b.datasets["test"] = support_set(DatasetRole::test, 4);
  b.update.target = "u";
  b.update.replacement = TrainerSpec::erm(LossFunction::mean_absolute_error());
  b.monte_carlo = MonteCarloSpec{"w", 8, 1000};
  b.analysis.downstream = "w";
  b.subsets = {{"far", RangeFilter{1, 20.0, std::nullopt}}, {"near", RangeFilter{1, std::nullopt, 20.0}}};

  auto filtered = [](ExpectedEffect e, bool on) {
    e.when_range_filter = on;
    return e;
  };
  b.expected_effects = {
      effect("upstream loss does not increase", "test_loss.delta.u", Comparison::le, 0.0),
      effect("far-range error of u grows", "subset_test_loss.far.delta.u", Comparison::gt, 0.0),
      filtered(effect("detector loss strictly increases", "test_loss.delta.w", Comparison::gt, 0.0), false),
      filtered(effect("upstream error carries the growth", "decomposition.delta.upstream_error", Comparison::gt,
                      0.0),
               false),
      filtered(effect("expected detector risk grows by two pooled standard errors", "monte_carlo.gap_in_se",
                      Comparison::ge, 2.0),
               false),
      filtered(effect("self-defeating", "verdict", Comparison::eq, 1.0), false),
      filtered(effect("near-only training: detector loss does not increase", "test_loss.delta.w", Comparison::le,
                      0.0),
               true),
      filtered(effect("near-only training: not self-defeating", "verdict", Comparison::eq, 0.0), true),
  };
  return b;
}

ScenarioBundle build_leaf_control() {
  auto b = build_s3_anticorrelated();
  b.id = "leaf-control";
  b.description = "update of a leaf node; nothing downstream is retrained";
  b.update.target = "w";
  b.update.replacement = TrainerSpec::erm();
  b.expected_effects = {
      effect("not self-defeating", "verdict", Comparison::eq, 0.0),
      effect("leaf loss unchanged", "test_loss.delta.w", Comparison::eq, 0.0),
  };
  return b;
}

std::vector<ScenarioInfo> list_scenarios() {
  std::vector<ScenarioInfo> out;
  for (auto* build : {build_s1_approximation, build_s2_estimation, build_s3_anticorrelated, build_s4_correlated,
                      build_s5_loss_mismatch}) {
    auto b = build();
    out.push_back({b.id, b.description});
  }
  return out;
}

std::optional<ScenarioBundle> find_scenario(const std::string& id) {
  if (id == "S1-approximation" || id == "S1") return build_s1_approximation();
  if (id == "S2-estimation" || id == "S2") return build_s2_estimation();
  if (id == "S3-anticorrelated" || id == "S3") return build_s3_anticorrelated();
  if (id == "S4-correlated" || id == "S4") return build_s4_correlated();
  if (id == "S5-loss-mismatch" || id == "S5") return build_s5_loss_mismatch();
  if (id == "leaf-control") return build_leaf_control();
  return std::nullopt;
}

GroundTruthDistribution make_distribution(const ScenarioBundle& bundle) {
  if (bundle.support.empty()) fail(ErrorCode::empty_support, "scenario '" + bundle.id + "' has no support");
  return GroundTruthDistribution(bundle.support);
}

DatasetMap materialize_datasets(const ScenarioBundle& bundle, const GroundTruthDistribution& dist,
                                std::uint64_t seed) {
  DatasetMap out;
  for (const auto& [name, spec] : bundle.datasets) {
    Dataset ds;
    switch (spec.kind) {
      case DatasetSpec::Kind::support: ds = dist.replicate(spec.resolution, spec.role); break;
      case DatasetSpec::Kind::sample: {
        if (spec.size == 0) fail(ErrorCode::invalid_dataset, "dataset '" + name + "' has size 0");
        Rng rng(derive_seed(seed, name));
        ds.role = spec.role;
        for (auto i : draw_support_indices(dist, spec.size, rng)) ds.items.push_back(dist.support()[i].example);
        break;
      }
      case DatasetSpec::Kind::indices:
        ds.role = spec.role;
        for (auto i : spec.indices) {
          if (i >= dist.size()) {
            fail(ErrorCode::invalid_dataset, "dataset '" + name + "' index " + std::to_string(i) + " out of range");
          }
          ds.items.push_back(dist.support()[i].example);
        }
        break;
    }
    ds.validate();
    out.emplace(name, std::move(ds));
  }
  return out;
}

std::vector<TrainedModel> companion_candidates(const ScenarioBundle& bundle, const ValidatedGraph& graph,
                                               const GroundTruthDistribution& dist, const ModelSet& models) {
  if (!bundle.analysis.companion) return {};
  const auto& c = *bundle.analysis.companion;
  if (!c.explicit_candidates.empty()) return c.explicit_candidates;
  std::set<Tuple> keys;
  for (const auto& p : dist.support()) keys.insert(node_input(graph, models, c.node, p.example.x));
  return enumerate_binary_tables({keys.begin(), keys.end()});
}

namespace {

double subset_loss(const ValidatedGraph& graph, const ModelSet& models, const NodeId& node, const Dataset& test,
                   const RangeFilter& filter) {
  Dataset kept;
  kept.role = test.role;
  for (const auto& e : test.items) {
    if (filter.accepts(e.x)) kept.items.push_back(e);
  }
  if (kept.items.empty()) return 0.0;
  return test_loss(graph, models, node, kept);
}

StageAnalysis analyze(const ScenarioBundle& bundle, const ValidatedGraph& graph, const ModelSet& models,
                      const GroundTruthDistribution& dist, const DatasetMap& datasets,
                      const std::map<NodeId, double>& losses, const RunOptions& options, std::size_t trials) {
  StageAnalysis s;
  s.models = models;
  s.test_losses = losses;
  for (const auto& id : graph.order()) {
    s.exact_risks[id] = exact_risk(graph, models, id, dist, graph.node(id).test_loss);
  }
  for (const auto& subset : bundle.subsets) {
    for (const auto& id : graph.order()) {
      s.subset_test_losses[subset.name][id] =
          subset_loss(graph, models, id, datasets.at(graph.node(id).test_set), subset.filter);
    }
  }
  const auto& down = bundle.analysis.downstream;
  s.decomposition = decompose_node(dist, graph, models, down);
  s.conditioned_oracle = conditioned_optimal(dist, node_featurizer(graph, models, down), down,
                                             graph.node(down).test_loss);
  if (bundle.analysis.companion) {
    s.upstream_decomposition = decompose_two_upstream(dist, graph, models, down, bundle.analysis.companion->node,
                                                      companion_candidates(bundle, graph, dist, models));
  }
  if (bundle.monte_carlo) {
    // Both stages use the same seed, so trial t draws the same sample before
    // and after the update.
    s.monte_carlo = expected_downstream_risk(dist, graph, models, bundle.monte_carlo->node,
                                             bundle.monte_carlo->sample_size, trials, options.seed,
                                             {options.parallel, options.range_filter});
  }
  return s;
}

void add_decomposition(std::map<std::string, double>& m, const std::string& prefix, const RiskDecomposition& d) {
  m[prefix + ".downstream_risk"] = d.downstream_risk;
  m[prefix + ".bayes_risk"] = d.bayes_risk;
  m[prefix + ".conditioned_risk"] = d.conditioned_risk;
  m[prefix + ".restricted_risk"] = d.restricted_risk;
  m[prefix + ".total_excess"] = d.total_excess;
  m[prefix + ".upstream_error"] = d.upstream_error;
  m[prefix + ".approximation_error"] = d.approximation_error;
  m[prefix + ".estimation_error"] = d.estimation_error;
  m[prefix + ".residual"] = d.residual();
}

void add_upstream(std::map<std::string, double>& m, const std::string& prefix, const UpstreamDecomposition& d) {
  m[prefix + ".conditioned_risk"] = d.conditioned_risk;
  m[prefix + ".companion_risk"] = d.companion_risk;
  m[prefix + ".bayes_risk"] = d.bayes_risk;
  m[prefix + ".compatibility_error"] = d.compatibility_error;
  m[prefix + ".excess_upstream_error"] = d.excess_upstream_error;
  m[prefix + ".upstream_error"] = d.upstream_error();
}

double agreement(const ValidatedGraph& graph, const ModelSet& models, const GroundTruthDistribution& dist,
                 const NodeId& a, const NodeId& b) {
  double mass = 0.0;
  for (const auto& p : dist.support()) {
    const auto out = forward(graph, models, p.example.x);
    if (out.at(a) == out.at(b)) mass += p.mass;
  }
  return mass;
}

bool compare(double observed, Comparison op, double value, double tol) {
  switch (op) {
    case Comparison::eq: return std::abs(observed - value) <= tol;
    case Comparison::lt: return observed < value - tol;
    case Comparison::le: return observed <= value + tol;
    case Comparison::gt: return observed > value + tol;
    case Comparison::ge: return observed >= value - tol;
  }
  return false;
}

}  // namespace

ScenarioReport run_scenario(const ScenarioBundle& bundle, const RunOptions& options) {
  auto dist = make_distribution(bundle);
  auto graph = validate(bundle.graph);
  check_input_slices(graph, dist.input_arity());
  for (const auto& id : graph.order()) {
    for (const auto& p : dist.support()) {
      if (!p.example.has_target(id)) fail(ErrorCode::missing_targets, "support lacks targets for node '" + id + "'");
    }
  }
  if (!graph.contains(bundle.analysis.downstream)) {
    fail(ErrorCode::target_not_found, "analysis names unknown node '" + bundle.analysis.downstream + "'");
  }
  const auto datasets = materialize_datasets(bundle, dist, options.seed);
  const std::size_t trials = options.trials.value_or(bundle.monte_carlo ? bundle.monte_carlo->trials : 0);

  TrainOptions train;
  train.range_filter_enabled = options.range_filter;
  train.parallel = options.parallel;
  train.overrides = bundle.baseline_overrides;
  const auto baseline = train_system(graph, datasets, options.seed, train);

  UpdateRequest request = bundle.update;
  request.retrain_seed = options.seed;
  UpdateOptions update_options;
  update_options.strict_improvement = options.strict_improvement;
  update_options.range_filter_enabled = options.range_filter;
  auto outcome = apply_update(graph, baseline, request, datasets, update_options);

  auto before = analyze(bundle, graph, baseline, dist, datasets, outcome.before, options, trials);
  auto after = analyze(bundle, outcome.graph_after, outcome.models_after, dist, datasets, outcome.after, options,
                       trials);

  std::map<std::string, double> m;
  for (const auto& id : graph.order()) {
    m["test_loss.before." + id] = outcome.before.at(id);
    m["test_loss.after." + id] = outcome.after.at(id);
    m["test_loss.delta." + id] = outcome.after.at(id) - outcome.before.at(id);
    m["risk.before." + id] = before.exact_risks.at(id);
    m["risk.after." + id] = after.exact_risks.at(id);
    m["risk.delta." + id] = after.exact_risks.at(id) - before.exact_risks.at(id);
  }
  for (const auto& subset : bundle.subsets) {
    for (const auto& id : graph.order()) {
      const double b = before.subset_test_losses.at(subset.name).at(id);
      const double a = after.subset_test_losses.at(subset.name).at(id);
      m["subset_test_loss." + subset.name + ".before." + id] = b;
      m["subset_test_loss." + subset.name + ".after." + id] = a;
      m["subset_test_loss." + subset.name + ".delta." + id] = a - b;
    }
  }
  add_decomposition(m, "decomposition.before", before.decomposition);
  add_decomposition(m, "decomposition.after", after.decomposition);
  m["decomposition.delta.total_excess"] = after.decomposition.total_excess - before.decomposition.total_excess;
  m["decomposition.delta.upstream_error"] =
      after.decomposition.upstream_error - before.decomposition.upstream_error;
  m["decomposition.delta.approximation_error"] =
      after.decomposition.approximation_error - before.decomposition.approximation_error;
  m["decomposition.delta.estimation_error"] =
      after.decomposition.estimation_error - before.decomposition.estimation_error;
  if (before.upstream_decomposition) {
    add_upstream(m, "upstream_decomposition.before", *before.upstream_decomposition);
    add_upstream(m, "upstream_decomposition.after", *after.upstream_decomposition);
  }
  for (const auto& [a, b] : bundle.analysis.agreement_pairs) {
    m["agreement.before." + a + "." + b] = agreement(graph, baseline, dist, a, b);
    m["agreement.after." + a + "." + b] = agreement(outcome.graph_after, outcome.models_after, dist, a, b);
  }
  bool monte_carlo_degraded = false;
  if (before.monte_carlo) {
    const auto& mb = *before.monte_carlo;
    const auto& ma = *after.monte_carlo;
    const double se = pooled_standard_error(mb, ma);
    const double gap = ma.mean - mb.mean;
    m["monte_carlo.before.mean"] = mb.mean;
    m["monte_carlo.before.stderr"] = mb.standard_error;
    m["monte_carlo.before.single_class_trials"] = static_cast<double>(mb.single_class_trials);
    m["monte_carlo.after.mean"] = ma.mean;
    m["monte_carlo.after.stderr"] = ma.standard_error;
    m["monte_carlo.after.single_class_trials"] = static_cast<double>(ma.single_class_trials);
    // Expected risk minus the restricted optimum: the estimation term in
    // expectation over training samples.
    const double eb = mb.mean - before.decomposition.restricted_risk;
    const double ea = ma.mean - after.decomposition.restricted_risk;
    m["monte_carlo.before.expected_estimation_error"] = eb;
    m["monte_carlo.after.expected_estimation_error"] = ea;
    m["monte_carlo.expected_estimation_error_delta"] = ea - eb;
    m["monte_carlo.gap"] = gap;
    m["monte_carlo.pooled_stderr"] = se;
    m["monte_carlo.gap_in_se"] = se > 0.0 ? gap / se : (gap > 0.0 ? 1e300 : 0.0);
    monte_carlo_degraded = gap > 0.0 && gap >= 2.0 * se;
  }
  m["improvement_held"] = outcome.improvement_held ? 1.0 : 0.0;
  m["self_defeating_by_test_loss"] = outcome.self_defeating_nodes.empty() ? 0.0 : 1.0;
  m["retrained_count"] = static_cast<double>(outcome.retrained.size());

  bool verdict = !outcome.self_defeating_nodes.empty();
  if (bundle.verdict_basis == VerdictBasis::monte_carlo && bundle.monte_carlo) {
    verdict = outcome.improvement_held && monte_carlo_degraded;
  }
  m["verdict"] = verdict ? 1.0 : 0.0;

  std::vector<EffectResult> effects;
  bool all = true;
  for (const auto& e : bundle.expected_effects) {
    EffectResult r;
    r.effect = e;
    if (e.when_range_filter && *e.when_range_filter != options.range_filter) {
      r.checked = false;
    } else {
      auto it = m.find(e.metric);
      if (it == m.end()) fail(ErrorCode::config_invalid, "expected effect names unknown metric '" + e.metric + "'");
      r.observed = it->second;
      r.passed = compare(r.observed, e.op, e.value, e.tolerance);
    }
    all = all && r.passed;
    effects.push_back(std::move(r));
  }

  auto bayes = bayes_optimal(dist, bundle.analysis.downstream, graph.node(bundle.analysis.downstream).test_loss);
  return ScenarioReport{
      .scenario_id = bundle.id,
      .options = options,
      .trials = trials,
      .graph = std::move(graph),
      .dist = std::move(dist),
      .before = std::move(before),
      .after = std::move(after),
      .outcome = std::move(outcome),
      .bayes_oracle = std::move(bayes),
      .metrics = std::move(m),
      .effects = std::move(effects),
      .self_defeating = verdict,
      .all_effects_hold = all,
  };
}

void require_expected_effects(const ScenarioReport& report) {
  for (const auto& r : report.effects) {
    if (!r.passed) {
      std::ostringstream os;
      os.precision(17);
      os << report.scenario_id << ": expected effect '" << r.effect.description << "' failed (" << r.effect.metric
         << " = " << r.observed << ")";
      fail(ErrorCode::expected_effect_violated, os.str());
    }
  }
}

}  // namespace entangle
