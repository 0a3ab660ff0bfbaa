#include "entangle/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "entangle/error.hpp"

namespace entangle {
namespace {

void check_finite(const Json& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw std::logic_error("non-finite number in report at " + (where.empty() ? std::string("/") : where));
  }
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) check_finite(v, where + "/" + k);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) check_finite(j[i], where + "/" + std::to_string(i));
  }
}

Json monte_carlo_json(const MonteCarloStats& s) {
  return {{"mean", s.mean},
          {"stderr", s.standard_error},
          {"trials", s.trials},
          {"sample_size", s.sample_size},
          {"single_class_trials", s.single_class_trials}};
}

Json models_json(const ValidatedGraph& graph, const ModelSet& models) {
  Json j = Json::object();
  for (const auto& id : graph.order()) {
    Json m = model_to_json(models.at(id));
    m["version"] = models.at(id).version;
    j[id] = m;
  }
  return j;
}

Json oracle_json(const OracleFunction& o) {
  Json table = Json::array();
  for (const auto& [k, v] : o.table) {
    Json key = Json::array();
    for (double x : k) key.push_back(x);
    Json value = Json::array();
    for (double x : v) value.push_back(x);
    table.push_back(Json::array({key, value}));
  }
  return {{"scope", o.scope}, {"risk", o.risk}, {"table", table}};
}

const char* comparison_name(Comparison c) {
  switch (c) {
    case Comparison::eq: return "eq";
    case Comparison::lt: return "lt";
    case Comparison::le: return "le";
    case Comparison::gt: return "gt";
    case Comparison::ge: return "ge";
  }
  return "eq";
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Json decomposition_to_json(const RiskDecomposition& d) {
  return {{"downstream_risk", d.downstream_risk},
          {"bayes_risk", d.bayes_risk},
          {"conditioned_risk", d.conditioned_risk},
          {"restricted_risk", d.restricted_risk},
          {"total_excess", d.total_excess},
          {"upstream_error", d.upstream_error},
          {"approximation_error", d.approximation_error},
          {"estimation_error", d.estimation_error},
          {"residual", d.residual()}};
}

Json upstream_decomposition_to_json(const UpstreamDecomposition& d) {
  return {{"conditioned_risk", d.conditioned_risk},
          {"companion_risk", d.companion_risk},
          {"bayes_risk", d.bayes_risk},
          {"upstream_error", d.upstream_error()},
          {"compatibility_error", d.compatibility_error},
          {"excess_upstream_error", d.excess_upstream_error},
          {"residual", d.compatibility_error + d.excess_upstream_error - d.upstream_error()},
          {"companion_index", d.companion_index},
          {"companion", model_to_json(d.companion)}};
}

Json report_to_json(const ScenarioReport& r) {
  const auto& g = r.graph;
  Json nodes = Json::array();
  for (const auto& id : g.order()) {
    Json parents = Json::array();
    for (const auto& p : g.parents(id)) parents.push_back(p);
    const auto& spec = g.node(id);
    Json n = {{"id", id},
              {"family", std::string(to_string(spec.family.kind()))},
              {"parents", parents},
              {"test_loss_kind", std::string(to_string(spec.test_loss.kind()))},
              {"test_loss", {{"before", r.outcome.before.at(id)},
                             {"after", r.outcome.after.at(id)},
                             {"delta", r.outcome.after.at(id) - r.outcome.before.at(id)}}},
              {"exact_risk", {{"before", r.before.exact_risks.at(id)}, {"after", r.after.exact_risks.at(id)}}}};
    if (!r.before.subset_test_losses.empty()) {
      Json subsets = Json::object();
      for (const auto& [name, losses] : r.before.subset_test_losses) {
        subsets[name] = {{"before", losses.at(id)}, {"after", r.after.subset_test_losses.at(name).at(id)}};
      }
      n["subset_test_loss"] = subsets;
    }
    nodes.push_back(n);
  }

  Json retrained = Json::array();
  for (const auto& id : r.outcome.retrained) retrained.push_back(id);
  Json flagged = Json::array();
  for (const auto& id : r.outcome.self_defeating_nodes) flagged.push_back(id);

  Json doc = {{"scenario", r.scenario_id},
              {"seed", r.options.seed},
              {"trials", r.trials},
              {"options",
               {{"strict_improvement", r.options.strict_improvement}, {"filter_train_range", r.options.range_filter}}},
              {"order", g.order()},
              {"nodes", nodes},
              {"update",
               {{"retrained", retrained},
                {"improvement_held", r.outcome.improvement_held},
                {"self_defeating_nodes", flagged}}},
              {"self_defeating", r.self_defeating},
              {"decomposition",
               {{"before", decomposition_to_json(r.before.decomposition)},
                {"after", decomposition_to_json(r.after.decomposition)}}}};
  if (r.before.upstream_decomposition) {
    doc["upstream_decomposition"] = {{"before", upstream_decomposition_to_json(*r.before.upstream_decomposition)},
                                     {"after", upstream_decomposition_to_json(*r.after.upstream_decomposition)}};
  }
  if (r.before.monte_carlo) {
    doc["monte_carlo"] = {{"before", monte_carlo_json(*r.before.monte_carlo)},
                          {"after", monte_carlo_json(*r.after.monte_carlo)},
                          {"gap", r.metrics.at("monte_carlo.gap")},
                          {"pooled_stderr", r.metrics.at("monte_carlo.pooled_stderr")}};
  }
  doc["oracles"] = {{"bayes", oracle_json(r.bayes_oracle)},
                    {"conditioned", {{"before", oracle_json(r.before.conditioned_oracle)},
                                     {"after", oracle_json(r.after.conditioned_oracle)}}}};
  doc["models"] = {{"before", models_json(g, r.before.models)},
                   {"after", models_json(r.outcome.graph_after, r.outcome.models_after)}};
  Json metrics = Json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  doc["metrics"] = metrics;
  Json effects = Json::array();
  for (const auto& e : r.effects) {
    effects.push_back({{"description", e.effect.description},
                       {"metric", e.effect.metric},
                       {"op", comparison_name(e.effect.op)},
                       {"value", e.effect.value},
                       {"tolerance", e.effect.tolerance},
                       {"checked", e.checked},
                       {"observed", e.observed},
                       {"passed", e.passed}});
  }
  doc["expected_effects"] = effects;
  doc["all_effects_hold"] = r.all_effects_hold;
  return doc;
}

std::string points_csv(const ScenarioReport& r) {
  const auto& g = r.graph;
  const auto& support = r.dist.support();
  std::vector<std::size_t> out_arity;
  std::ostringstream os;
  os << "index,mass";
  for (std::size_t i = 0; i < r.dist.input_arity(); ++i) os << ",x" << i;
  const auto first_before = forward(g, r.before.models, support.front().example.x);
  for (const auto& id : g.order()) {
    for (std::size_t j = 0; j < support.front().example.target(id).size(); ++j) os << ",target_" << id << "_" << j;
  }
  for (const char* stage : {"before", "after"}) {
    for (const auto& id : g.order()) {
      for (std::size_t j = 0; j < first_before.at(id).size(); ++j) os << "," << stage << "_" << id << "_" << j;
    }
  }
  os << "\n";
  for (std::size_t i = 0; i < support.size(); ++i) {
    const auto& ex = support[i].example;
    os << i << "," << number(support[i].mass);
    for (double v : ex.x) os << "," << number(v);
    for (const auto& id : g.order()) {
      for (double v : ex.target(id)) os << "," << number(v);
    }
    const auto before = forward(g, r.before.models, ex.x);
    const auto after = forward(r.outcome.graph_after, r.outcome.models_after, ex.x);
    for (const auto* outputs : {&before, &after}) {
      for (const auto& id : g.order()) {
        for (double v : outputs->at(id)) os << "," << number(v);
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string dump_json(const Json& j) {
  check_finite(j, "");
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_failure, "cannot open '" + path.string() + "' for writing");
  out << content;
  out.close();
  if (!out) fail(ErrorCode::io_failure, "failed writing '" + path.string() + "'");
}

}  // namespace entangle
