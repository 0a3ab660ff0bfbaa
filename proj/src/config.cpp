#include "entangle/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "entangle/error.hpp"

namespace entangle {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  fail(ErrorCode::config_invalid, (where.empty() ? std::string("/") : where) + ": " + what);
}

std::string child(const std::string& where, const std::string& key) { return where + "/" + key; }
std::string child(const std::string& where, std::size_t i) { return where + "/" + std::to_string(i); }

const char* type_name(const Json& j) { return j.type_name(); }

void expect_object(const Json& j, const std::string& where, std::initializer_list<const char*> allowed,
                   std::initializer_list<const char*> required = {}) {
  if (!j.is_object()) invalid(where, std::string("expected an object, got ") + type_name(j));
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) invalid(child(where, key), "unknown key");
  }
  for (const char* r : required) {
    if (!j.contains(r)) invalid(child(where, r), "missing required key");
  }
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) invalid(child(where, key), "missing required key");
  return j.at(key);
}

std::string get_string(const Json& j, const std::string& where) {
  if (!j.is_string()) invalid(where, std::string("expected a string, got ") + type_name(j));
  return j.get<std::string>();
}

double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) invalid(where, std::string("expected a number, got ") + type_name(j));
  return j.get<double>();
}

bool get_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) invalid(where, std::string("expected a boolean, got ") + type_name(j));
  return j.get<bool>();
}

std::uint64_t get_count(const Json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) invalid(where, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

int get_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) invalid(where, "expected an integer");
  return j.get<int>();
}

Tuple get_tuple(const Json& j, const std::string& where) {
  if (!j.is_array()) invalid(where, std::string("expected an array of numbers, got ") + type_name(j));
  Tuple t;
  for (std::size_t i = 0; i < j.size(); ++i) t.push_back(get_number(j[i], child(where, i)));
  return t;
}

std::vector<std::size_t> get_indices(const Json& j, const std::string& where) {
  if (!j.is_array()) invalid(where, "expected an array of indices");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_count(j[i], child(where, i)));
  return out;
}

const Json& get_array(const Json& j, const std::string& where) {
  if (!j.is_array()) invalid(where, std::string("expected an array, got ") + type_name(j));
  return j;
}

Json tuple_json(const Tuple& t) {
  Json a = Json::array();
  for (double v : t) a.push_back(v);
  return a;
}

Json table_json(const LookupTable& t) {
  Json a = Json::array();
  for (const auto& [k, v] : t) a.push_back(Json::array({tuple_json(k), tuple_json(v)}));
  return a;
}

LookupTable table_from_json(const Json& j, const std::string& where) {
  LookupTable t;
  get_array(j, where);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto w = child(where, i);
    if (!j[i].is_array() || j[i].size() != 2) invalid(w, "expected a [key, value] pair");
    auto key = get_tuple(j[i][0], child(w, 0));
    if (!t.emplace(std::move(key), get_tuple(j[i][1], child(w, 1))).second) invalid(w, "duplicate table key");
  }
  return t;
}

Json filter_json(const RangeFilter& f) {
  Json j = {{"component", f.component}};
  if (f.min) j["min"] = *f.min;
  if (f.max) j["max"] = *f.max;
  return j;
}

RangeFilter filter_from_json(const Json& j, const std::string& where) {
  expect_object(j, where, {"component", "min", "max"}, {"component"});
  RangeFilter f;
  f.component = get_count(j.at("component"), child(where, "component"));
  if (j.contains("min")) f.min = get_number(j.at("min"), child(where, "min"));
  if (j.contains("max")) f.max = get_number(j.at("max"), child(where, "max"));
  return f;
}

Json trainer_json(const TrainerSpec& t) {
  if (t.kind == TrainerSpec::Kind::fixed) return {{"kind", "fixed"}, {"model", model_to_json(*t.model)}};
  Json j = {{"kind", "erm"}};
  if (t.objective) j["objective"] = loss_to_json(*t.objective);
  j["tie_break"] = "lexicographic";
  j["constant_on_single_class"] = t.constant_on_single_class;
  return j;
}

TrainerSpec trainer_from_json(const Json& j, const std::string& where) {
  expect_object(j, where, {"kind", "objective", "tie_break", "constant_on_single_class", "model"}, {"kind"});
  const auto kind = get_string(j.at("kind"), child(where, "kind"));
  if (kind == "fixed") {
    expect_object(j, where, {"kind", "model"}, {"model"});
    return TrainerSpec::fixed(model_from_json(j.at("model"), child(where, "model")));
  }
  if (kind != "erm") invalid(child(where, "kind"), "expected 'erm' or 'fixed'");
  if (j.contains("model")) invalid(child(where, "model"), "only fixed trainers carry a model");
  TrainerSpec t;
  if (j.contains("objective")) t.objective = loss_from_json(j.at("objective"), child(where, "objective"));
  if (j.contains("tie_break") && get_string(j.at("tie_break"), child(where, "tie_break")) != "lexicographic") {
    invalid(child(where, "tie_break"), "only 'lexicographic' is supported");
  }
  if (j.contains("constant_on_single_class")) {
    t.constant_on_single_class =
        get_bool(j.at("constant_on_single_class"), child(where, "constant_on_single_class"));
  }
  return t;
}

const char* role_name(DatasetRole r) { return r == DatasetRole::train ? "train" : "test"; }

DatasetRole role_from_json(const Json& j, const std::string& where) {
  const auto s = get_string(j, where);
  if (s == "train") return DatasetRole::train;
  if (s == "test") return DatasetRole::test;
  invalid(where, "expected 'train' or 'test'");
}

constexpr std::pair<Comparison, const char*> kComparisons[] = {
    {Comparison::eq, "eq"}, {Comparison::lt, "lt"}, {Comparison::le, "le"},
    {Comparison::gt, "gt"}, {Comparison::ge, "ge"},
};

const char* comparison_name(Comparison c) {
  for (const auto& [k, n] : kComparisons) {
    if (k == c) return n;
  }
  return "eq";
}

Json node_json(const NodeSpec& n) {
  Json slice = Json::array();
  for (auto i : n.input_slice) slice.push_back(i);
  Json j = {{"id", n.id},
            {"input_slice", slice},
            {"family", family_to_json(n.family)},
            {"trainer", trainer_json(n.trainer)},
            {"train_set", n.train_set},
            {"test_set", n.test_set},
            {"test_loss", loss_to_json(n.test_loss)}};
  if (n.train_range_filter) j["train_range_filter"] = filter_json(*n.train_range_filter);
  return j;
}

NodeSpec node_from_json(const Json& j, const std::string& where) {
  expect_object(j, where,
                {"id", "input_slice", "family", "trainer", "train_set", "test_set", "test_loss", "train_range_filter"},
                {"id", "family", "trainer", "train_set", "test_set", "test_loss"});
  NodeSpec n;
  n.id = get_string(j.at("id"), child(where, "id"));
  if (n.id.empty()) invalid(child(where, "id"), "node id must be non-empty");
  if (j.contains("input_slice")) n.input_slice = get_indices(j.at("input_slice"), child(where, "input_slice"));
  n.family = family_from_json(j.at("family"), child(where, "family"));
  n.trainer = trainer_from_json(j.at("trainer"), child(where, "trainer"));
  n.train_set = get_string(j.at("train_set"), child(where, "train_set"));
  n.test_set = get_string(j.at("test_set"), child(where, "test_set"));
  n.test_loss = loss_from_json(j.at("test_loss"), child(where, "test_loss"));
  if (j.contains("train_range_filter")) {
    n.train_range_filter = filter_from_json(j.at("train_range_filter"), child(where, "train_range_filter"));
  }
  return n;
}

Json replacement_json(const UpdateRequest::Replacement& r) {
  return std::visit(overloaded{
                        [](const TrainedModel& m) -> Json { return {{"kind", "model"}, {"model", model_to_json(m)}}; },
                        [](const TrainerSpec& t) -> Json { return {{"kind", "trainer"}, {"trainer", trainer_json(t)}}; },
                        [](const HypothesisFamily& f) -> Json {
                          return {{"kind", "family"}, {"family", family_to_json(f)}};
                        },
                        [](const UpdateRequest::NewTrainSet& s) -> Json {
                          return {{"kind", "train_set"}, {"dataset", s.dataset}};
                        },
                    },
                    r);
}

UpdateRequest::Replacement replacement_from_json(const Json& j, const std::string& where) {
  expect_object(j, where, {"kind", "model", "trainer", "family", "dataset"}, {"kind"});
  const auto kind = get_string(j.at("kind"), child(where, "kind"));
  if (kind == "model") {
    expect_object(j, where, {"kind", "model"}, {"model"});
    return model_from_json(j.at("model"), child(where, "model"));
  }
  if (kind == "trainer") {
    expect_object(j, where, {"kind", "trainer"}, {"trainer"});
    return trainer_from_json(j.at("trainer"), child(where, "trainer"));
  }
  if (kind == "family") {
    expect_object(j, where, {"kind", "family"}, {"family"});
    return family_from_json(j.at("family"), child(where, "family"));
  }
  if (kind == "train_set") {
    expect_object(j, where, {"kind", "dataset"}, {"dataset"});
    return UpdateRequest::NewTrainSet{get_string(j.at("dataset"), child(where, "dataset"))};
  }
  invalid(child(where, "kind"), "expected one of model, trainer, family, train_set");
}

}  // namespace

Json loss_to_json(const LossFunction& loss) {
  Json j = {{"kind", std::string(to_string(loss.kind()))}};
  if (loss.kind() == LossKind::weighted_mean_absolute_error) j["weights"] = tuple_json(loss.weights());
  if (loss.kind() == LossKind::depth_mean_absolute_error) j["camera_constant"] = loss.camera_constant();
  return j;
}

LossFunction loss_from_json(const Json& j, const std::string& where) {
  expect_object(j, where, {"kind", "weights", "camera_constant"}, {"kind"});
  const auto name = get_string(j.at("kind"), child(where, "kind"));
  LossKind kind;
  try {
    kind = loss_kind_from_string(name);
  } catch (const Error&) {
    invalid(child(where, "kind"), "unknown loss kind '" + name + "'");
  }
  auto no_extra = [&](const char* allowed) {
    for (const char* k : {"weights", "camera_constant"}) {
      if (j.contains(k) && std::string(k) != (allowed ? allowed : "")) {
        invalid(child(where, k), "not a parameter of " + name);
      }
    }
  };
  try {
    switch (kind) {
      case LossKind::weighted_mean_absolute_error:
        no_extra("weights");
        return LossFunction::weighted_mean_absolute_error(get_tuple(field(j, "weights", where), child(where, "weights")));
      case LossKind::depth_mean_absolute_error:
        no_extra("camera_constant");
        return LossFunction::depth_mean_absolute_error(
            get_number(field(j, "camera_constant", where), child(where, "camera_constant")));
      case LossKind::zero_one: no_extra(nullptr); return LossFunction::zero_one();
      case LossKind::mean_absolute_error: no_extra(nullptr); return LossFunction::mean_absolute_error();
      case LossKind::euclidean_point_error: no_extra(nullptr); return LossFunction::euclidean_point_error();
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_invalid) throw;
    invalid(where, e.what());
  }
  invalid(where, "unsupported loss");
}

Json family_to_json(const HypothesisFamily& family) {
  Json j = {{"kind", std::string(to_string(family.kind()))}};
  std::visit(overloaded{
                 [&](const TableFamily& f) { j["default_output"] = f.default_output; },
                 [&](const LinearClassifier2d& f) {
                   j["angle_steps"] = f.angle_steps;
                   j["offset_min"] = f.offset_min;
                   j["offset_max"] = f.offset_max;
                   j["offset_steps"] = f.offset_steps;
                 },
                 [&](const QuadraticClassifier2d& f) { j["coefficient_levels"] = f.coefficient_levels; },
                 [&](const PointPredictorTable& f) { j["arity"] = f.arity; },
                 [&](const InterpolatedPredictor& f) {
                   j["base_a"] = table_json(f.base_a);
                   j["base_b"] = table_json(f.base_b);
                   j["alpha_steps"] = f.alpha_steps;
                 },
                 [&](const ThresholdDetector1d& f) {
                   j["threshold_min"] = f.threshold_min;
                   j["threshold_max"] = f.threshold_max;
                   j["threshold_steps"] = f.threshold_steps;
                 },
                 [&](const ConstantClassifier&) {},
             },
             family.spec());
  return j;
}

HypothesisFamily family_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) invalid(where, std::string("expected an object, got ") + type_name(j));
  const auto name = get_string(field(j, "kind", where), child(where, "kind"));
  FamilyKind kind;
  try {
    kind = family_kind_from_string(name);
  } catch (const Error&) {
    invalid(child(where, "kind"), "unknown hypothesis family '" + name + "'");
  }
  auto num = [&](const char* key, double fallback) {
    return j.contains(key) ? get_number(j.at(key), child(where, key)) : fallback;
  };
  auto integer = [&](const char* key, int fallback) {
    return j.contains(key) ? get_int(j.at(key), child(where, key)) : fallback;
  };
  switch (kind) {
    case FamilyKind::table: {
      expect_object(j, where, {"kind", "default_output"});
      TableFamily f;
      f.default_output = num("default_output", f.default_output);
      if (f.default_output != kPositive && f.default_output != kNegative) {
        invalid(child(where, "default_output"), "expected +1 or -1");
      }
      return f;
    }
    case FamilyKind::linear_classifier_2d: {
      expect_object(j, where, {"kind", "angle_steps", "offset_min", "offset_max", "offset_steps"});
      LinearClassifier2d f;
      f.angle_steps = integer("angle_steps", f.angle_steps);
      f.offset_min = num("offset_min", f.offset_min);
      f.offset_max = num("offset_max", f.offset_max);
      f.offset_steps = integer("offset_steps", f.offset_steps);
      if (f.angle_steps < 1 || f.offset_steps < 1 || f.offset_max < f.offset_min) invalid(where, "empty grid");
      return f;
    }
    case FamilyKind::quadratic_classifier_2d: {
      expect_object(j, where, {"kind", "coefficient_levels"});
      QuadraticClassifier2d f;
      f.coefficient_levels = integer("coefficient_levels", f.coefficient_levels);
      if (f.coefficient_levels < 2 || f.coefficient_levels > 9) {
        invalid(child(where, "coefficient_levels"), "expected an integer in [2, 9]");
      }
      return f;
    }
    case FamilyKind::point_predictor_table: {
      expect_object(j, where, {"kind", "arity"});
      PointPredictorTable f;
      if (j.contains("arity")) f.arity = get_count(j.at("arity"), child(where, "arity"));
      if (f.arity == 0) invalid(child(where, "arity"), "arity must be positive");
      return f;
    }
    case FamilyKind::interpolated_predictor_1param: {
      expect_object(j, where, {"kind", "base_a", "base_b", "alpha_steps"}, {"base_a", "base_b"});
      InterpolatedPredictor f;
      f.base_a = table_from_json(j.at("base_a"), child(where, "base_a"));
      f.base_b = table_from_json(j.at("base_b"), child(where, "base_b"));
      f.alpha_steps = integer("alpha_steps", f.alpha_steps);
      if (f.alpha_steps < 2) invalid(child(where, "alpha_steps"), "expected at least 2 steps");
      return f;
    }
    case FamilyKind::threshold_detector_1d: {
      expect_object(j, where, {"kind", "threshold_min", "threshold_max", "threshold_steps"});
      ThresholdDetector1d f;
      f.threshold_min = num("threshold_min", f.threshold_min);
      f.threshold_max = num("threshold_max", f.threshold_max);
      f.threshold_steps = integer("threshold_steps", f.threshold_steps);
      if (f.threshold_steps < 1 || f.threshold_max < f.threshold_min) invalid(where, "empty grid");
      return f;
    }
    case FamilyKind::constant_classifier: expect_object(j, where, {"kind"}); return ConstantClassifier{};
  }
  invalid(where, "unsupported family");
}

Json model_to_json(const TrainedModel& model) {
  Json j = {{"family", family_to_json(model.family)}};
  if (model.family.is_table()) {
    j["table"] = table_json(model.table);
  } else {
    j["params"] = tuple_json(model.params);
  }
  return j;
}

TrainedModel model_from_json(const Json& j, const std::string& where) {
  expect_object(j, where, {"family", "params", "table"}, {"family"});
  auto family = family_from_json(j.at("family"), child(where, "family"));
  try {
    if (family.is_table()) {
      if (j.contains("params")) invalid(child(where, "params"), "table models take 'table'");
      return make_table_model(std::move(family), table_from_json(field(j, "table", where), child(where, "table")));
    }
    if (j.contains("table")) invalid(child(where, "table"), "grid models take 'params'");
    return make_grid_model(std::move(family), get_tuple(field(j, "params", where), child(where, "params")));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_invalid) throw;
    invalid(where, e.what());
  }
}

Json bundle_to_json(const ScenarioBundle& b) {
  Json support = Json::array();
  for (const auto& p : b.support) {
    Json targets = Json::object();
    for (const auto& [k, v] : p.example.targets) targets[k] = tuple_json(v);
    support.push_back({{"x", tuple_json(p.example.x)}, {"mass", p.mass}, {"targets", targets}});
  }
  Json nodes = Json::array();
  for (const auto& n : b.graph.nodes) nodes.push_back(node_json(n));
  Json edges = Json::array();
  for (const auto& e : b.graph.edges) edges.push_back({{"source", e.source}, {"target", e.target}});
  Json datasets = Json::object();
  for (const auto& [name, d] : b.datasets) {
    Json dj;
    switch (d.kind) {
      case DatasetSpec::Kind::support: dj = {{"kind", "support"}, {"role", role_name(d.role)}, {"resolution", d.resolution}}; break;
      case DatasetSpec::Kind::sample: dj = {{"kind", "sample"}, {"role", role_name(d.role)}, {"size", d.size}}; break;
      case DatasetSpec::Kind::indices: {
        Json idx = Json::array();
        for (auto i : d.indices) idx.push_back(i);
        dj = {{"kind", "indices"}, {"role", role_name(d.role)}, {"indices", idx}};
        break;
      }
    }
    datasets[name] = dj;
  }
  Json overrides = Json::object();
  for (const auto& [id, m] : b.baseline_overrides) overrides[id] = model_to_json(m);
  Json effects = Json::array();
  for (const auto& e : b.expected_effects) {
    Json ej = {{"description", e.description},
               {"metric", e.metric},
               {"op", comparison_name(e.op)},
               {"value", e.value},
               {"tolerance", e.tolerance}};
    if (e.when_range_filter) ej["when_range_filter"] = *e.when_range_filter;
    effects.push_back(ej);
  }
  Json analysis = {{"downstream", b.analysis.downstream}};
  if (b.analysis.companion) {
    Json c = {{"node", b.analysis.companion->node}};
    if (!b.analysis.companion->explicit_candidates.empty()) {
      Json cands = Json::array();
      for (const auto& m : b.analysis.companion->explicit_candidates) cands.push_back(model_to_json(m));
      c["candidates"] = cands;
    }
    analysis["companion"] = c;
  }
  if (!b.analysis.agreement_pairs.empty()) {
    Json pairs = Json::array();
    for (const auto& [x, y] : b.analysis.agreement_pairs) pairs.push_back(Json::array({x, y}));
    analysis["agreement_pairs"] = pairs;
  }

  Json doc = {{"id", b.id},
              {"description", b.description},
              {"support", support},
              {"graph", {{"nodes", nodes}, {"edges", edges}}},
              {"datasets", datasets}};
  if (!overrides.empty()) doc["baseline_overrides"] = overrides;
  doc["update"] = {{"target", b.update.target}, {"replacement", replacement_json(b.update.replacement)}};
  doc["expected_effects"] = effects;
  if (b.monte_carlo) {
    doc["monte_carlo"] = {{"node", b.monte_carlo->node},
                          {"sample_size", b.monte_carlo->sample_size},
                          {"trials", b.monte_carlo->trials}};
  }
  doc["analysis"] = analysis;
  if (!b.subsets.empty()) {
    Json subsets = Json::array();
    for (const auto& s : b.subsets) subsets.push_back({{"name", s.name}, {"filter", filter_json(s.filter)}});
    doc["subsets"] = subsets;
  }
  doc["verdict_basis"] = b.verdict_basis == VerdictBasis::monte_carlo ? "monte_carlo" : "test_loss";
  return doc;
}

ScenarioBundle bundle_from_json(const Json& doc) {
  const std::string root;
  expect_object(doc, root,
                {"id", "description", "support", "graph", "datasets", "baseline_overrides", "update",
                 "expected_effects", "monte_carlo", "analysis", "subsets", "verdict_basis"},
                {"id", "support", "graph", "datasets", "update", "analysis"});
  ScenarioBundle b;
  b.id = get_string(doc.at("id"), "/id");
  if (doc.contains("description")) b.description = get_string(doc.at("description"), "/description");

  const auto& support = get_array(doc.at("support"), "/support");
  if (support.empty()) invalid("/support", "support must be non-empty");
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto w = child("/support", i);
    expect_object(support[i], w, {"x", "mass", "targets"}, {"x", "mass", "targets"});
    SupportPoint p;
    p.example.x = get_tuple(support[i].at("x"), child(w, "x"));
    p.mass = get_number(support[i].at("mass"), child(w, "mass"));
    const auto& targets = support[i].at("targets");
    if (!targets.is_object()) invalid(child(w, "targets"), "expected an object");
    for (const auto& [k, v] : targets.items()) p.example.targets[k] = get_tuple(v, child(child(w, "targets"), k));
    b.support.push_back(std::move(p));
  }

  const auto& graph = doc.at("graph");
  expect_object(graph, "/graph", {"nodes", "edges"}, {"nodes"});
  const auto& nodes = get_array(graph.at("nodes"), "/graph/nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) b.graph.nodes.push_back(node_from_json(nodes[i], child("/graph/nodes", i)));
  if (graph.contains("edges")) {
    const auto& edges = get_array(graph.at("edges"), "/graph/edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto w = child("/graph/edges", i);
      expect_object(edges[i], w, {"source", "target"}, {"source", "target"});
      b.graph.edges.push_back(
          {get_string(edges[i].at("source"), child(w, "source")), get_string(edges[i].at("target"), child(w, "target"))});
    }
  }

  const auto& datasets = doc.at("datasets");
  if (!datasets.is_object()) invalid("/datasets", "expected an object");
  for (const auto& [name, d] : datasets.items()) {
    const auto w = child("/datasets", name);
    expect_object(d, w, {"kind", "role", "resolution", "size", "indices"}, {"kind", "role"});
    DatasetSpec spec;
    spec.role = role_from_json(d.at("role"), child(w, "role"));
    const auto kind = get_string(d.at("kind"), child(w, "kind"));
    if (kind == "support") {
      expect_object(d, w, {"kind", "role", "resolution"}, {"resolution"});
      spec.kind = DatasetSpec::Kind::support;
      spec.resolution = get_count(d.at("resolution"), child(w, "resolution"));
      if (spec.resolution == 0) invalid(child(w, "resolution"), "resolution must be positive");
    } else if (kind == "sample") {
      expect_object(d, w, {"kind", "role", "size"}, {"size"});
      spec.kind = DatasetSpec::Kind::sample;
      spec.size = get_count(d.at("size"), child(w, "size"));
      if (spec.size == 0) invalid(child(w, "size"), "size must be positive");
    } else if (kind == "indices") {
      expect_object(d, w, {"kind", "role", "indices"}, {"indices"});
      spec.kind = DatasetSpec::Kind::indices;
      spec.indices = get_indices(d.at("indices"), child(w, "indices"));
      if (spec.indices.empty()) invalid(child(w, "indices"), "indices must be non-empty");
    } else {
      invalid(child(w, "kind"), "expected support, sample or indices");
    }
    b.datasets[name] = std::move(spec);
  }

  if (doc.contains("baseline_overrides")) {
    const auto& o = doc.at("baseline_overrides");
    if (!o.is_object()) invalid("/baseline_overrides", "expected an object");
    for (const auto& [id, m] : o.items()) {
      b.baseline_overrides.emplace(id, model_from_json(m, child("/baseline_overrides", id)));
    }
  }

  const auto& update = doc.at("update");
  expect_object(update, "/update", {"target", "replacement"}, {"target", "replacement"});
  b.update.target = get_string(update.at("target"), "/update/target");
  b.update.replacement = replacement_from_json(update.at("replacement"), "/update/replacement");

  if (doc.contains("expected_effects")) {
    const auto& effects = get_array(doc.at("expected_effects"), "/expected_effects");
    for (std::size_t i = 0; i < effects.size(); ++i) {
      const auto w = child("/expected_effects", i);
      expect_object(effects[i], w, {"description", "metric", "op", "value", "tolerance", "when_range_filter"},
                    {"metric", "op", "value"});
      ExpectedEffect e;
      if (effects[i].contains("description")) e.description = get_string(effects[i].at("description"), child(w, "description"));
      e.metric = get_string(effects[i].at("metric"), child(w, "metric"));
      if (e.description.empty()) e.description = e.metric;
      const auto op = get_string(effects[i].at("op"), child(w, "op"));
      bool found = false;
      for (const auto& [k, n] : kComparisons) {
        if (op == n) {
          e.op = k;
          found = true;
        }
      }
      if (!found) invalid(child(w, "op"), "expected one of eq, lt, le, gt, ge");
      e.value = get_number(effects[i].at("value"), child(w, "value"));
      if (effects[i].contains("tolerance")) {
        e.tolerance = get_number(effects[i].at("tolerance"), child(w, "tolerance"));
        if (e.tolerance < 0) invalid(child(w, "tolerance"), "tolerance must be non-negative");
      }
      if (effects[i].contains("when_range_filter")) {
        e.when_range_filter = get_bool(effects[i].at("when_range_filter"), child(w, "when_range_filter"));
      }
      b.expected_effects.push_back(std::move(e));
    }
  }

  if (doc.contains("monte_carlo")) {
    const auto& mc = doc.at("monte_carlo");
    expect_object(mc, "/monte_carlo", {"node", "sample_size", "trials"}, {"node", "sample_size"});
    MonteCarloSpec spec;
    spec.node = get_string(mc.at("node"), "/monte_carlo/node");
    spec.sample_size = get_count(mc.at("sample_size"), "/monte_carlo/sample_size");
    if (spec.sample_size == 0) invalid("/monte_carlo/sample_size", "sample_size must be positive");
    if (mc.contains("trials")) spec.trials = get_count(mc.at("trials"), "/monte_carlo/trials");
    if (spec.trials == 0) invalid("/monte_carlo/trials", "trials must be positive");
    b.monte_carlo = spec;
  }

  const auto& analysis = doc.at("analysis");
  expect_object(analysis, "/analysis", {"downstream", "companion", "agreement_pairs"}, {"downstream"});
  b.analysis.downstream = get_string(analysis.at("downstream"), "/analysis/downstream");
  if (analysis.contains("companion")) {
    const auto& c = analysis.at("companion");
    expect_object(c, "/analysis/companion", {"node", "candidates"}, {"node"});
    CompanionSpec spec;
    spec.node = get_string(c.at("node"), "/analysis/companion/node");
    if (c.contains("candidates")) {
      const auto& cands = get_array(c.at("candidates"), "/analysis/companion/candidates");
      for (std::size_t i = 0; i < cands.size(); ++i) {
        spec.explicit_candidates.push_back(model_from_json(cands[i], child("/analysis/companion/candidates", i)));
      }
    }
    b.analysis.companion = std::move(spec);
  }
  if (analysis.contains("agreement_pairs")) {
    const auto& pairs = get_array(analysis.at("agreement_pairs"), "/analysis/agreement_pairs");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto w = child("/analysis/agreement_pairs", i);
      if (!pairs[i].is_array() || pairs[i].size() != 2) invalid(w, "expected a pair of node ids");
      b.analysis.agreement_pairs.emplace_back(get_string(pairs[i][0], child(w, 0)), get_string(pairs[i][1], child(w, 1)));
    }
  }

  if (doc.contains("subsets")) {
    const auto& subsets = get_array(doc.at("subsets"), "/subsets");
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      const auto w = child("/subsets", i);
      expect_object(subsets[i], w, {"name", "filter"}, {"name", "filter"});
      b.subsets.push_back({get_string(subsets[i].at("name"), child(w, "name")),
                           filter_from_json(subsets[i].at("filter"), child(w, "filter"))});
    }
  }
  if (doc.contains("verdict_basis")) {
    const auto v = get_string(doc.at("verdict_basis"), "/verdict_basis");
    if (v == "monte_carlo") {
      b.verdict_basis = VerdictBasis::monte_carlo;
    } else if (v != "test_loss") {
      invalid("/verdict_basis", "expected test_loss or monte_carlo");
    }
  }
  if (b.verdict_basis == VerdictBasis::monte_carlo && !b.monte_carlo) {
    invalid("/verdict_basis", "monte_carlo verdict needs a monte_carlo block");
  }
  return b;
}

ScenarioBundle parse_bundle(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream os;
    os << "line " << line << ", column " << column << ": syntax error";
    const std::string what = e.what();
    if (auto pos = what.find("; "); pos != std::string::npos) os << " (" << what.substr(pos + 2) << ")";
    fail(ErrorCode::config_invalid, os.str());
  }
  return bundle_from_json(doc);
}

ScenarioBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::config_invalid, "cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_bundle(buf.str());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::config_invalid) throw;
    const std::string what = e.what();
    const std::string prefix = std::string(to_string(ErrorCode::config_invalid)) + ": ";
    fail(ErrorCode::config_invalid,
         path.string() + ": " + (what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what));
  }
}

}  // namespace entangle
