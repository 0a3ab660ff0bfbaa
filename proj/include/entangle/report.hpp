#pragma once

#include <filesystem>
#include <string>

#include "entangle/config.hpp"
#include "entangle/scenarios.hpp"

namespace entangle {

/// Full structured report. Contains no timestamps, so identical inputs give
/// byte-identical output.
Json report_to_json(const ScenarioReport& report);

/// One row per support point: mass, raw input, targets, and every node's
/// output before and after the update.
std::string points_csv(const ScenarioReport& report);

Json decomposition_to_json(const RiskDecomposition& d);
Json upstream_decomposition_to_json(const UpstreamDecomposition& d);

/// Two-space indented JSON with a trailing newline. Throws std::logic_error
/// on a non-finite number.
std::string dump_json(const Json& j);
/// Throws io_failure when the file cannot be written.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace entangle
