#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace entangle {

/// Flat real tuple used for inputs, node outputs and model parameters.
/// Class labels are encoded as -1/+1.
using Tuple = std::vector<double>;
using NodeId = std::string;

inline constexpr double kPositive = 1.0;
inline constexpr double kNegative = -1.0;

struct Example {
  Tuple x;
  std::map<NodeId, Tuple> targets;

  const Tuple& target(const NodeId& node) const;
  bool has_target(const NodeId& node) const { return targets.count(node) != 0; }
};

enum class DatasetRole { train, test };

struct Dataset {
  std::vector<Example> items;
  DatasetRole role = DatasetRole::train;

  /// Throws invalid_dataset when empty or when inputs disagree on arity.
  void validate() const;
  std::size_t size() const { return items.size(); }
};

struct SupportPoint {
  Example example;
  double mass = 0.0;
};

/// Finite-support joint distribution over raw inputs and per-task targets.
/// Masses are strictly positive and sum to one within 1e-12.
class GroundTruthDistribution {
 public:
  explicit GroundTruthDistribution(std::vector<SupportPoint> support);

  const std::vector<SupportPoint>& support() const noexcept { return support_; }
  std::size_t size() const noexcept { return support_.size(); }
  std::size_t input_arity() const noexcept { return support_.front().example.x.size(); }

  /// Replicates each support point round(mass * resolution) times. Throws
  /// invalid_dataset unless every mass is an integer multiple of 1/resolution.
  Dataset replicate(std::size_t resolution, DatasetRole role) const;

 private:
  std::vector<SupportPoint> support_;
};

/// One (input, target, weight) triple as seen by a trainer or an oracle.
struct WeightedSample {
  Tuple input;
  Tuple target;
  double weight = 1.0;
};

/// Lexicographic three-way comparison used by every deterministic tie-break.
bool lexicographically_less(std::span<const double> a, std::span<const double> b);

std::string format_tuple(std::span<const double> t);

}  // namespace entangle
