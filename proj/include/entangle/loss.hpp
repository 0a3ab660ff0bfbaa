#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace entangle {

enum class LossKind {
  zero_one,
  mean_absolute_error,
  euclidean_point_error,
  weighted_mean_absolute_error,
  depth_mean_absolute_error,
};

std::string_view to_string(LossKind kind) noexcept;
LossKind loss_kind_from_string(std::string_view name);

/// Parameter-free per-item loss. Weighted MAE carries fixed per-coordinate
/// weights and depth MAE a fixed camera constant; neither is trainable.
class LossFunction {
 public:
  static LossFunction zero_one() { return LossFunction(LossKind::zero_one); }
  static LossFunction mean_absolute_error() { return LossFunction(LossKind::mean_absolute_error); }
  static LossFunction euclidean_point_error() { return LossFunction(LossKind::euclidean_point_error); }
  static LossFunction weighted_mean_absolute_error(std::vector<double> weights);
  /// |C/p - C/t| averaged over coordinates: the error measured in depth
  /// units when predictions and targets are disparities.
  static LossFunction depth_mean_absolute_error(double camera_constant);

  LossKind kind() const noexcept { return kind_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double camera_constant() const noexcept { return camera_constant_; }

  double operator()(std::span<const double> prediction, std::span<const double> target) const;

  bool operator==(const LossFunction&) const = default;

 private:
  explicit LossFunction(LossKind kind) : kind_(kind) {}

  LossKind kind_;
  std::vector<double> weights_;
  double camera_constant_ = 0.0;
};

}  // namespace entangle
