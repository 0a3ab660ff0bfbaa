#include "entangle/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "entangle/config.hpp"
#include "entangle/error.hpp"
#include "entangle/report.hpp"
#include "entangle/scenarios.hpp"

#ifndef ENTANGLE_VERSION
#define ENTANGLE_VERSION "0.0.0"
#endif

namespace entangle::cli {
namespace {

namespace fs = std::filesystem;

struct Source {
  ScenarioBundle bundle;
  std::optional<std::string> config_path;
};

Source resolve(const std::string& name) {
  if (auto b = find_scenario(name)) return {std::move(*b), std::nullopt};
  if (!fs::exists(name)) {
    fail(ErrorCode::config_invalid, "'" + name + "' is neither a built-in scenario nor a readable config file");
  }
  return {load_bundle(name), name};
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string run_id(const ScenarioBundle& bundle, const RunOptions& options, std::size_t trials,
                   const std::string& verb) {
  Json key = {{"verb", verb},
              {"config", bundle_to_json(bundle)},
              {"seed", options.seed},
              {"trials", trials},
              {"strict_improvement", options.strict_improvement},
              {"filter_train_range", options.range_filter},
              {"version", ENTANGLE_VERSION}};
  return sha256_hex(key.dump());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_dir(const std::string& out, const std::string& scenario, const std::string& id) {
  if (!out.empty()) return out;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / (scenario + "-" + id.substr(0, 12));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::io_failure, "cannot create output directory '" + dir.string() + "'");
}

Json manifest(const std::string& id, const Source& src, const RunOptions& options, std::size_t trials,
              const std::vector<std::string>& files) {
  return {{"run_id", id},
          {"scenario", src.bundle.id},
          {"config", src.config_path ? Json(*src.config_path) : Json(nullptr)},
          {"seed", options.seed},
          {"trials", trials},
          {"strict_improvement", options.strict_improvement},
          {"filter_train_range", options.range_filter},
          {"tool_version", ENTANGLE_VERSION},
          {"timestamp", utc_timestamp()},
          {"files", files}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

int cmd_list(bool json, std::ostream& out) {
  const auto all = list_scenarios();
  if (json) {
    Json a = Json::array();
    for (const auto& s : all) a.push_back({{"id", s.id}, {"description", s.description}});
    out << dump_json(a);
    return kSuccess;
  }
  std::size_t width = 0;
  for (const auto& s : all) width = std::max(width, s.id.size());
  for (const auto& s : all) out << std::left << std::setw(static_cast<int>(width) + 2) << s.id << s.description << "\n";
  return kSuccess;
}

int cmd_run(const std::string& target, const RunOptions& options, const std::string& out_dir, bool quiet,
            std::ostream& out) {
  const auto src = resolve(target);
  const auto report = run_scenario(src.bundle, options);
  const auto id = run_id(src.bundle, options, report.trials, "run");
  const auto dir = output_dir(out_dir, src.bundle.id, id);
  make_dir(dir);
  write_text(dir / "report.json", dump_json(report_to_json(report)));
  write_text(dir / "points.csv", points_csv(report));
  write_text(dir / "manifest.json",
             dump_json(manifest(id, src, options, report.trials, {"report.json", "points.csv"})));

  if (!quiet) {
    out << report.scenario_id << "  seed " << options.seed << "  run " << id.substr(0, 12) << "\n";
    for (const auto& node : report.graph.order()) {
      out << "  " << node << ": test loss " << fmt(report.outcome.before.at(node)) << " -> "
          << fmt(report.outcome.after.at(node)) << "\n";
    }
    if (report.before.monte_carlo) {
      const auto& b = *report.before.monte_carlo;
      const auto& a = *report.after.monte_carlo;
      out << "  expected risk of " << src.bundle.monte_carlo->node << " (" << report.trials << " trials, N = "
          << b.sample_size << "): " << fmt(b.mean) << " +- " << fmt(b.standard_error) << " -> " << fmt(a.mean)
          << " +- " << fmt(a.standard_error) << "\n";
    }
    out << "  self-defeating: " << (report.self_defeating ? "yes" : "no") << "\n";
    for (const auto& e : report.effects) {
      out << "  [" << (!e.checked ? "skip" : e.passed ? "ok" : "FAIL") << "] " << e.effect.description << "\n";
    }
    out << "  artifacts: " << dir.string() << "\n";
  }
  require_expected_effects(report);
  return kSuccess;
}

int cmd_decompose(const std::string& target, const std::string& pair, const std::string& stage,
                  const RunOptions& options, const std::string& out_dir, std::ostream& out) {
  const auto src = resolve(target);
  const auto& bundle = src.bundle;
  const auto dist = make_distribution(bundle);
  const auto graph = validate(bundle.graph);
  check_input_slices(graph, dist.input_arity());
  const auto datasets = materialize_datasets(bundle, dist, options.seed);
  TrainOptions train;
  train.range_filter_enabled = options.range_filter;
  train.overrides = bundle.baseline_overrides;
  const auto baseline = train_system(graph, datasets, options.seed, train);

  std::optional<UpdateOutcome> outcome;
  if (stage == "after") {
    UpdateRequest request = bundle.update;
    request.retrain_seed = options.seed;
    UpdateOptions uo;
    uo.range_filter_enabled = options.range_filter;
    uo.strict_improvement = options.strict_improvement;
    outcome = apply_update(graph, baseline, request, datasets, uo);
  }
  const auto& g = outcome ? outcome->graph_after : graph;
  const auto& models = outcome ? outcome->models_after : baseline;
  const auto& down = bundle.analysis.downstream;

  Json doc = {{"scenario", bundle.id}, {"stage", stage}, {"pair", pair}, {"downstream", down}};
  double residual = 0.0;
  const auto row = [&](const std::string& name, const std::string& value) {
    out << std::left << std::setw(24) << name << value << "\n";
  };
  row("term", "value");
  if (pair == "two-model") {
    const auto d = decompose_node(dist, g, models, down);
    residual = d.residual();
    doc["terms"] = decomposition_to_json(d);
    row("upstream_error", fmt(d.upstream_error));
    row("approximation_error", fmt(d.approximation_error));
    row("estimation_error", fmt(d.estimation_error));
    row("total_excess", fmt(d.total_excess));
  } else {
    if (!bundle.analysis.companion) {
      fail(ErrorCode::config_invalid, "two-upstream decomposition needs /analysis/companion in the config");
    }
    const auto d = decompose_two_upstream(dist, g, models, down, bundle.analysis.companion->node,
                                          companion_candidates(bundle, g, dist, models));
    residual = d.compatibility_error + d.excess_upstream_error - d.upstream_error();
    doc["terms"] = upstream_decomposition_to_json(d);
    row("compatibility_error", fmt(d.compatibility_error));
    row("excess_upstream_error", fmt(d.excess_upstream_error));
    row("upstream_error", fmt(d.upstream_error()));
  }
  row("residual", fmt(residual));
  const auto id = run_id(bundle, options, 0, "decompose:" + pair + ":" + stage);
  const auto dir = output_dir(out_dir, bundle.id, id);
  make_dir(dir);
  write_text(dir / "decomposition.json", dump_json(doc));
  write_text(dir / "manifest.json", dump_json(manifest(id, src, options, 0, {"decomposition.json"})));
  if (!(std::abs(residual) < 1e-12)) throw std::logic_error("decomposition terms do not sum to the total");
  return kSuccess;
}

int cmd_export(const std::string& id, const std::string& file, std::ostream& out) {
  auto bundle = find_scenario(id);
  if (!bundle) fail(ErrorCode::config_invalid, "unknown scenario '" + id + "'");
  const auto text = dump_json(bundle_to_json(*bundle));
  if (file.empty()) {
    out << text;
  } else {
    write_text(file, text);
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Runs self-defeating-improvement scenarios on small ML system graphs", "entangle"};
  app.set_version_flag("--version", ENTANGLE_VERSION);
  app.require_subcommand(1);

  bool list_json = false;
  auto* list = app.add_subcommand("list", "List built-in scenarios");
  list->add_flag("--json", list_json, "Machine-readable output");

  RunOptions options;
  std::string target;
  std::string out_dir;
  bool quiet = false;
  bool serial = false;
  std::size_t trials = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("scenario", target, "Built-in scenario id or path to a config file")->required();
    sub->add_option("--seed", options.seed, "Run seed")->capture_default_str();
    sub->add_option("--out", out_dir, std::string("Output directory (default: $") + kOutputRootEnv + "/<run>)");
    sub->add_flag("--strict-improvement", options.strict_improvement,
                  "Require a strict decrease of the updated node's test loss");
    sub->add_flag("--filter-train-range", options.range_filter, "Apply downstream range filters during training");
  };
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write manifest, report and points");
  add_common(run_cmd);
  run_cmd->add_option("--trials", trials, "Monte-Carlo trials (default: from the scenario)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_flag("--serial", serial, "Disable internal parallelism");
  run_cmd->add_flag("--quiet", quiet, "Only write artifacts");

  std::string pair = "two-model";
  std::string stage = "after";
  auto* dec = app.add_subcommand("decompose", "Print the excess-risk decomposition");
  add_common(dec);
  dec->add_option("--pair", pair, "two-model or two-upstream")
      ->check(CLI::IsMember({"two-model", "two-upstream"}))
      ->capture_default_str();
  dec->add_option("--stage", stage, "Models before or after the update")
      ->check(CLI::IsMember({"before", "after"}))
      ->capture_default_str();

  std::string export_id;
  std::string export_file;
  auto* exp = app.add_subcommand("export", "Write a built-in scenario as a config file");
  exp->add_option("scenario", export_id, "Built-in scenario id")->required();
  exp->add_option("--out", export_file, "Destination file (default: stdout)");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("entangle");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*list) return cmd_list(list_json, out);
    if (*run_cmd) {
      if (trials > 0) options.trials = trials;
      options.parallel = !serial;
      return cmd_run(target, options, out_dir, quiet, out);
    }
    if (*dec) return cmd_decompose(target, pair, stage, options, out_dir, out);
    if (*exp) return cmd_export(export_id, export_file, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::expected_effect_violated: return kEffectViolated;
      case ErrorCode::io_failure: return kInternalError;
      default: return kUsageError;
    }
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUsageError;
}

}  // namespace entangle::cli
