#include "entangle/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "entangle/error.hpp"
#include "entangle/rng.hpp"

namespace entangle {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::cycle_detected: return "CycleDetected";
    case ErrorCode::dangling_edge: return "DanglingEdge";
    case ErrorCode::duplicate_node_id: return "DuplicateNodeId";
    case ErrorCode::duplicate_edge: return "DuplicateEdge";
    case ErrorCode::invalid_slice: return "InvalidSlice";
    case ErrorCode::missing_parent_output: return "MissingParentOutput";
    case ErrorCode::trainer_failed: return "TrainerFailed";
    case ErrorCode::incompatible_family: return "IncompatibleFamily";
    case ErrorCode::arity_mismatch: return "ArityMismatch";
    case ErrorCode::invalid_input: return "InvalidInput";
    case ErrorCode::missing_targets: return "MissingTargets";
    case ErrorCode::invalid_distribution: return "InvalidDistribution";
    case ErrorCode::invalid_dataset: return "InvalidDataset";
    case ErrorCode::empty_support: return "EmptySupport";
    case ErrorCode::empty_candidate_set: return "EmptyCandidateSet";
    case ErrorCode::target_not_found: return "TargetNotFound";
    case ErrorCode::incompatible_replacement: return "IncompatibleReplacement";
    case ErrorCode::degenerate_sample: return "DegenerateSample";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::expected_effect_violated: return "ExpectedEffectViolated";
    case ErrorCode::io_failure: return "IoFailure";
  }
  return "Unknown";
}

const Tuple& Example::target(const NodeId& node) const {
  auto it = targets.find(node);
  if (it == targets.end()) fail(ErrorCode::missing_targets, "example has no target for node '" + node + "'");
  return it->second;
}

void Dataset::validate() const {
  if (items.empty()) fail(ErrorCode::invalid_dataset, "dataset is empty");
  const auto arity = items.front().x.size();
  for (const auto& item : items) {
    if (item.x.size() != arity) fail(ErrorCode::invalid_dataset, "dataset items disagree on input arity");
  }
}

GroundTruthDistribution::GroundTruthDistribution(std::vector<SupportPoint> support) : support_(std::move(support)) {
  if (support_.empty()) fail(ErrorCode::empty_support, "distribution has no support points");
  double total = 0.0;
  const auto arity = support_.front().example.x.size();
  for (const auto& p : support_) {
    if (!(p.mass > 0.0) || !std::isfinite(p.mass)) {
      fail(ErrorCode::invalid_distribution, "support masses must be positive and finite");
    }
    if (p.example.x.size() != arity) fail(ErrorCode::invalid_distribution, "support points disagree on input arity");
    total += p.mass;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "support masses sum to " << total << ", not 1";
    fail(ErrorCode::invalid_distribution, os.str());
  }
}

Dataset GroundTruthDistribution::replicate(std::size_t resolution, DatasetRole role) const {
  if (resolution == 0) fail(ErrorCode::invalid_dataset, "replication resolution must be positive");
  Dataset out;
  out.role = role;
  for (const auto& p : support_) {
    const double scaled = p.mass * static_cast<double>(resolution);
    const double count = std::round(scaled);
    if (std::abs(scaled - count) > 1e-9 || count < 1.0) {
      fail(ErrorCode::invalid_dataset, "mass " + std::to_string(p.mass) + " is not a multiple of 1/" +
                                           std::to_string(resolution));
    }
    for (int i = 0; i < static_cast<int>(count); ++i) out.items.push_back(p.example);
  }
  return out;
}

bool lexicographically_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

std::string format_tuple(std::span<const double> t) {
  std::ostringstream os;
  os.precision(6);
  os << '(';
  for (std::size_t i = 0; i < t.size(); ++i) os << (i ? "," : "") << t[i];
  os << ')';
  return os.str();
}

std::size_t sample_index(Rng& rng, std::span<const double> cumulative) {
  const double u = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace entangle
