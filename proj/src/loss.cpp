#include "entangle/loss.hpp"

#include <cmath>
#include <string>

#include "entangle/error.hpp"

namespace entangle {

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::zero_one: return "zero-one";
    case LossKind::mean_absolute_error: return "mean-absolute-error";
    case LossKind::euclidean_point_error: return "euclidean-point-error";
    case LossKind::weighted_mean_absolute_error: return "weighted-mean-absolute-error";
    case LossKind::depth_mean_absolute_error: return "depth-mean-absolute-error";
  }
  return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
  for (auto k : {LossKind::zero_one, LossKind::mean_absolute_error, LossKind::euclidean_point_error,
                 LossKind::weighted_mean_absolute_error, LossKind::depth_mean_absolute_error}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::config_invalid, "unknown loss kind '" + std::string(name) + "'");
}

LossFunction LossFunction::weighted_mean_absolute_error(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::config_invalid, "loss weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorCode::config_invalid, "loss weights must not all be zero");
  LossFunction f(LossKind::weighted_mean_absolute_error);
  f.weights_ = std::move(weights);
  return f;
}

LossFunction LossFunction::depth_mean_absolute_error(double camera_constant) {
  if (!(camera_constant > 0.0) || !std::isfinite(camera_constant)) {
    fail(ErrorCode::config_invalid, "camera constant must be positive");
  }
  LossFunction f(LossKind::depth_mean_absolute_error);
  f.camera_constant_ = camera_constant;
  return f;
}

double LossFunction::operator()(std::span<const double> prediction, std::span<const double> target) const {
  if (prediction.size() != target.size()) {
    fail(ErrorCode::arity_mismatch, "prediction arity " + std::to_string(prediction.size()) +
                                        " != target arity " + std::to_string(target.size()));
  }
  const std::size_t n = target.size();
  switch (kind_) {
    case LossKind::zero_one:
      for (std::size_t i = 0; i < n; ++i) {
        if (prediction[i] != target[i]) return 1.0;
      }
      return 0.0;
    case LossKind::mean_absolute_error: {
      if (n == 0) return 0.0;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(prediction[i] - target[i]);
      return s / static_cast<double>(n);
    }
    case LossKind::euclidean_point_error: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (prediction[i] - target[i]) * (prediction[i] - target[i]);
      return std::sqrt(s);
    }
    case LossKind::weighted_mean_absolute_error: {
      if (weights_.size() != n) fail(ErrorCode::arity_mismatch, "loss weight count does not match target arity");
      double s = 0.0, total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += weights_[i] * std::abs(prediction[i] - target[i]);
        total += weights_[i];
      }
      return s / total;
    }
    case LossKind::depth_mean_absolute_error: {
      if (n == 0) return 0.0;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(prediction[i] > 0.0) || !(target[i] > 0.0)) {
          fail(ErrorCode::invalid_input, "depth loss needs positive disparities");
        }
        s += std::abs(camera_constant_ / prediction[i] - camera_constant_ / target[i]);
      }
      return s / static_cast<double>(n);
    }
  }
  return 0.0;
}

}  // namespace entangle
