#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "entangle/scenarios.hpp"

namespace entangle {

using Json = nlohmann::ordered_json;

/// Strict reader for scenario configuration documents. Unknown keys, missing
/// required keys and ill-typed values raise config_invalid with the JSON
/// pointer of the offending field.
ScenarioBundle bundle_from_json(const Json& doc);
Json bundle_to_json(const ScenarioBundle& bundle);

/// Parses a configuration file; syntax errors report line and column.
ScenarioBundle load_bundle(const std::filesystem::path& path);
ScenarioBundle parse_bundle(const std::string& text);

Json loss_to_json(const LossFunction& loss);
LossFunction loss_from_json(const Json& j, const std::string& where);
Json family_to_json(const HypothesisFamily& family);
HypothesisFamily family_from_json(const Json& j, const std::string& where);
Json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const Json& j, const std::string& where);

}  // namespace entangle
