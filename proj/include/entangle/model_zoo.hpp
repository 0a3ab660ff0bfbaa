#pragma once

#include <array>
#include <memory>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "entangle/core.hpp"
#include "entangle/loss.hpp"

namespace entangle {

using LookupTable = std::map<Tuple, Tuple>;

/// Binary table over whatever finite input domain the training data spans.
/// Unseen keys map to `default_output`.
struct TableFamily {
  double default_output = kNegative;
  bool operator==(const TableFamily&) const = default;
};

/// sign(n . z + b), n = (cos theta, sin theta). Parameters (theta, b).
struct LinearClassifier2d {
  int angle_steps = 720;
  double offset_min = -3.0;
  double offset_max = 3.0;
  int offset_steps = 61;
  bool operator==(const LinearClassifier2d&) const = default;
};

/// Sign of a full conic over 2D input. Parameters are the unit-norm
/// coefficient tuple (a, b, c, d, e, f) of a x^2 + b xy + c y^2 + d x + e y + f,
/// gridded by normalizing every tuple on a uniform per-coefficient lattice.
struct QuadraticClassifier2d {
  int coefficient_levels = 5;
  bool operator==(const QuadraticClassifier2d&) const = default;
};

/// Real-valued table; ERM picks, per key, the observed target with the
/// smallest weighted loss.
struct PointPredictorTable {
  std::size_t arity = 1;
  bool operator==(const PointPredictorTable&) const = default;
};

/// (1 - alpha) * A(x) + alpha * B(x) for fixed base tables A and B.
struct InterpolatedPredictor {
  LookupTable base_a;
  LookupTable base_b;
  int alpha_steps = 101;
  bool operator==(const InterpolatedPredictor&) const = default;
};

/// +1 iff the scalar input is strictly below tau.
struct ThresholdDetector1d {
  double threshold_min = 0.0;
  double threshold_max = 80.0;
  int threshold_steps = 161;
  bool operator==(const ThresholdDetector1d&) const = default;
};

/// Fallback for single-class training data. Parameter: the label.
struct ConstantClassifier {
  bool operator==(const ConstantClassifier&) const = default;
};

enum class FamilyKind {
  table,
  linear_classifier_2d,
  quadratic_classifier_2d,
  point_predictor_table,
  interpolated_predictor_1param,
  threshold_detector_1d,
  constant_classifier,
};

std::string_view to_string(FamilyKind kind) noexcept;
FamilyKind family_kind_from_string(std::string_view name);

class HypothesisFamily {
 public:
  using Spec = std::variant<TableFamily, LinearClassifier2d, QuadraticClassifier2d, PointPredictorTable,
                            InterpolatedPredictor, ThresholdDetector1d, ConstantClassifier>;

  HypothesisFamily(Spec spec);  // NOLINT(google-explicit-constructor)
  template <class T>
    requires std::is_constructible_v<Spec, T>
  HypothesisFamily(T family) : HypothesisFamily(Spec(std::move(family))) {}  // NOLINT(google-explicit-constructor)

  const Spec& spec() const noexcept { return spec_; }
  FamilyKind kind() const noexcept;

  template <class T>
  const T& as() const {
    return std::get<T>(spec_);
  }

  bool is_classifier() const noexcept;
  bool is_table() const noexcept;
  /// Required input arity, or 0 when any arity is accepted.
  std::size_t input_arity() const noexcept;

  /// Lexicographically sorted parameter grid. Throws incompatible_family for
  /// table kinds, whose parameters are per-key outputs instead.
  const std::vector<Tuple>& parameter_grid() const;

  bool operator==(const HypothesisFamily& other) const { return spec_ == other.spec_; }

 private:
  Spec spec_;
  mutable std::shared_ptr<const std::vector<Tuple>> grid_;
};

struct TrainedModel {
  HypothesisFamily family;
  Tuple params;
  LookupTable table;
  NodeId node_id;
  int version = 0;

  bool same_function(const TrainedModel& other) const {
    return family == other.family && params == other.params && table == other.table;
  }
};

TrainedModel make_constant_model(double label);
TrainedModel make_table_model(HypothesisFamily family, LookupTable table);
TrainedModel make_grid_model(HypothesisFamily family, Tuple params);

/// Pure evaluation. Throws arity_mismatch when the input arity does not fit.
Tuple predict(const TrainedModel& model, std::span<const double> input);

/// Evaluates a grid parameter point without materializing a model; used by
/// the ERM scan and by oracles.
double predict_grid_scalar(const HypothesisFamily& family, std::span<const double> params,
                           std::span<const double> input);

enum class TieBreak { lexicographic };

/// Ties in loss are resolved within this absolute tolerance.
inline constexpr double kTieTolerance = 1e-12;

/// Exhaustive empirical risk minimization over the family's finite domain.
/// Among all minimizers (within kTieTolerance) the lexicographically smallest
/// parameter tuple wins. Throws incompatible_family on empty or ill-typed data.
TrainedModel erm_train(const HypothesisFamily& family, std::span<const WeightedSample> items,
                       const LossFunction& loss, TieBreak tie_break = TieBreak::lexicographic);

/// Weighted mean loss of `model` over `items` (weights normalized).
double empirical_risk(const TrainedModel& model, std::span<const WeightedSample> items,
                      const LossFunction& loss);

/// Lexicographic tie-break: index of the smallest tuple among `candidates`
/// whose loss is within kTieTolerance of the minimum.
std::size_t select_minimizer(std::span<const Tuple> candidates, std::span<const double> losses);

/// All 2^K binary tables over `keys` in counting order (-1 before +1, first
/// key most significant).
std::vector<TrainedModel> enumerate_binary_tables(const std::vector<Tuple>& keys);

}  // namespace entangle
