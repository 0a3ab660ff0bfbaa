#include "entangle/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "entangle/error.hpp"

namespace entangle {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Monomial evaluated by each quadratic parameter slot, in the order
// a x^2 + b xy + c y^2 + d x + e y + f. Codes: 0 -> 1, 1 -> x, 2 -> y,
// 3 -> x^2, 4 -> xy, 5 -> y^2.
constexpr std::array<int, 6> kQuadraticMonomials = {3, 4, 5, 1, 2, 0};

inline double monomial(int which, double x, double y) {
  switch (which) {
    case 0: return 1.0;
    case 1: return x;
    case 2: return y;
    case 3: return x * x;
    case 4: return x * y;
    default: return y * y;
  }
}

inline double label_of(double score) { return score >= 0.0 ? kPositive : kNegative; }

std::vector<Tuple> linear_grid(const LinearClassifier2d& f) {
  if (f.angle_steps < 1 || f.offset_steps < 1 || !(f.offset_max >= f.offset_min)) {
    fail(ErrorCode::incompatible_family, "linear-classifier-2d grid is empty");
  }
  std::vector<Tuple> grid;
  grid.reserve(static_cast<std::size_t>(f.angle_steps) * static_cast<std::size_t>(f.offset_steps));
  for (int i = 0; i < f.angle_steps; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / f.angle_steps;
    for (int j = 0; j < f.offset_steps; ++j) {
      const double b = f.offset_steps == 1
                           ? f.offset_min
                           : f.offset_min + (f.offset_max - f.offset_min) * j / (f.offset_steps - 1);
      grid.push_back({theta, b});
    }
  }
  return grid;
}

std::vector<Tuple> quadratic_grid(const QuadraticClassifier2d& f) {
  const int levels = f.coefficient_levels;
  if (levels < 2 || levels > 9) fail(ErrorCode::incompatible_family, "quadratic coefficient_levels must be in [2, 9]");
  // Integer lattice m_i = 2k - (levels - 1); positive multiples collapse to
  // one primitive direction before normalization.
  std::set<std::array<int, 6>> primitive;
  std::array<int, 6> m{};
  std::array<int, 6> k{};
  while (true) {
    int g = 0;
    for (int i = 0; i < 6; ++i) {
      m[i] = 2 * k[i] - (levels - 1);
      g = std::gcd(g, std::abs(m[i]));
    }
    if (g != 0) {
      std::array<int, 6> p{};
      for (int i = 0; i < 6; ++i) p[i] = m[i] / g;
      primitive.insert(p);
    }
    int pos = 5;
    while (pos >= 0 && ++k[pos] == levels) k[pos--] = 0;
    if (pos < 0) break;
  }
  std::vector<Tuple> grid;
  grid.reserve(primitive.size());
  for (const auto& p : primitive) {
    double norm = 0.0;
    for (int v : p) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    Tuple t(6);
    for (int i = 0; i < 6; ++i) t[i] = p[i] / norm;
    grid.push_back(std::move(t));
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

std::vector<Tuple> uniform_grid(double lo, double hi, int steps, const char* what) {
  if (steps < 1 || !(hi >= lo)) fail(ErrorCode::incompatible_family, std::string(what) + " grid is empty");
  std::vector<Tuple> grid;
  for (int i = 0; i < steps; ++i) grid.push_back({steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1)});
  return grid;
}

std::size_t table_key_arity(const LookupTable& table) { return table.empty() ? 0 : table.begin()->first.size(); }

const Tuple& lookup(const LookupTable& table, std::span<const double> input, const char* what) {
  auto it = table.find(Tuple(input.begin(), input.end()));
  if (it == table.end()) fail(ErrorCode::invalid_input, std::string(what) + " has no entry for " + format_tuple(input));
  return it->second;
}

void check_arity(std::size_t expected, std::size_t got, FamilyKind kind) {
  if (expected != 0 && expected != got) {
    fail(ErrorCode::arity_mismatch, std::string(to_string(kind)) + " expects input arity " +
                                        std::to_string(expected) + ", got " + std::to_string(got));
  }
}

Tuple interpolate(const InterpolatedPredictor& f, double alpha, std::span<const double> input) {
  const Tuple& a = lookup(f.base_a, input, "interpolated base A");
  const Tuple& b = lookup(f.base_b, input, "interpolated base B");
  Tuple out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
  return out;
}

bool is_label(const Tuple& t) { return t.size() == 1 && (t[0] == kPositive || t[0] == kNegative); }

double normalized(double sum, double total) { return total > 0.0 ? sum / total : 0.0; }

}  // namespace

std::string_view to_string(FamilyKind kind) noexcept {
  switch (kind) {
    case FamilyKind::table: return "table";
    case FamilyKind::linear_classifier_2d: return "linear-classifier-2d";
    case FamilyKind::quadratic_classifier_2d: return "quadratic-classifier-2d";
    case FamilyKind::point_predictor_table: return "point-predictor-table";
    case FamilyKind::interpolated_predictor_1param: return "interpolated-predictor-1param";
    case FamilyKind::threshold_detector_1d: return "threshold-detector-1d";
    case FamilyKind::constant_classifier: return "constant-classifier";
  }
  return "unknown";
}

FamilyKind family_kind_from_string(std::string_view name) {
  for (auto k : {FamilyKind::table, FamilyKind::linear_classifier_2d, FamilyKind::quadratic_classifier_2d,
                 FamilyKind::point_predictor_table, FamilyKind::interpolated_predictor_1param,
                 FamilyKind::threshold_detector_1d, FamilyKind::constant_classifier}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::config_invalid, "unknown hypothesis family '" + std::string(name) + "'");
}

HypothesisFamily::HypothesisFamily(Spec spec) : spec_(std::move(spec)) {}

FamilyKind HypothesisFamily::kind() const noexcept {
  return std::visit(overloaded{
                        [](const TableFamily&) { return FamilyKind::table; },
                        [](const LinearClassifier2d&) { return FamilyKind::linear_classifier_2d; },
                        [](const QuadraticClassifier2d&) { return FamilyKind::quadratic_classifier_2d; },
                        [](const PointPredictorTable&) { return FamilyKind::point_predictor_table; },
                        [](const InterpolatedPredictor&) { return FamilyKind::interpolated_predictor_1param; },
                        [](const ThresholdDetector1d&) { return FamilyKind::threshold_detector_1d; },
                        [](const ConstantClassifier&) { return FamilyKind::constant_classifier; },
                    },
                    spec_);
}

bool HypothesisFamily::is_classifier() const noexcept {
  const auto k = kind();
  return k != FamilyKind::point_predictor_table && k != FamilyKind::interpolated_predictor_1param;
}

bool HypothesisFamily::is_table() const noexcept {
  const auto k = kind();
  return k == FamilyKind::table || k == FamilyKind::point_predictor_table;
}

std::size_t HypothesisFamily::input_arity() const noexcept {
  switch (kind()) {
    case FamilyKind::linear_classifier_2d:
    case FamilyKind::quadratic_classifier_2d: return 2;
    case FamilyKind::threshold_detector_1d: return 1;
    case FamilyKind::interpolated_predictor_1param: return table_key_arity(as<InterpolatedPredictor>().base_a);
    default: return 0;
  }
}

const std::vector<Tuple>& HypothesisFamily::parameter_grid() const {
  static std::mutex cache_mutex;
  std::lock_guard lock(cache_mutex);
  if (grid_) return *grid_;
  auto grid = std::visit(
      overloaded{
          [](const TableFamily&) -> std::vector<Tuple> {
            fail(ErrorCode::incompatible_family, "table families have no parameter grid");
          },
          [](const PointPredictorTable&) -> std::vector<Tuple> {
            fail(ErrorCode::incompatible_family, "table families have no parameter grid");
          },
          [](const LinearClassifier2d& f) { return linear_grid(f); },
          [](const QuadraticClassifier2d& f) {
            // Identical lattices are shared across family copies.
            static std::map<int, std::vector<Tuple>> shared;
            auto it = shared.find(f.coefficient_levels);
            if (it == shared.end()) it = shared.emplace(f.coefficient_levels, quadratic_grid(f)).first;
            return it->second;
          },
          [](const InterpolatedPredictor& f) {
            if (f.base_a.empty() || f.base_a.size() != f.base_b.size()) {
              fail(ErrorCode::incompatible_family, "interpolated predictor needs base tables over the same keys");
            }
            return uniform_grid(0.0, 1.0, f.alpha_steps, "alpha");
          },
          [](const ThresholdDetector1d& f) {
            return uniform_grid(f.threshold_min, f.threshold_max, f.threshold_steps, "threshold");
          },
          [](const ConstantClassifier&) { return std::vector<Tuple>{{kNegative}, {kPositive}}; },
      },
      spec_);
  grid_ = std::make_shared<const std::vector<Tuple>>(std::move(grid));
  return *grid_;
}

TrainedModel make_constant_model(double label) {
  return TrainedModel{HypothesisFamily(ConstantClassifier{}), {label}, {}, {}, 0};
}

TrainedModel make_table_model(HypothesisFamily family, LookupTable table) {
  if (!family.is_table()) fail(ErrorCode::incompatible_family, "make_table_model needs a table family");
  return TrainedModel{std::move(family), {}, std::move(table), {}, 0};
}

TrainedModel make_grid_model(HypothesisFamily family, Tuple params) {
  if (family.is_table()) fail(ErrorCode::incompatible_family, "make_grid_model needs a grid family");
  return TrainedModel{std::move(family), std::move(params), {}, {}, 0};
}

double predict_grid_scalar(const HypothesisFamily& family, std::span<const double> p, std::span<const double> in) {
  switch (family.kind()) {
    case FamilyKind::linear_classifier_2d:
      return label_of(std::cos(p[0]) * in[0] + std::sin(p[0]) * in[1] + p[1]);
    case FamilyKind::quadratic_classifier_2d: {
      double s = 0.0;
      for (int i = 0; i < 6; ++i) s += p[i] * monomial(kQuadraticMonomials[i], in[0], in[1]);
      return label_of(s);
    }
    case FamilyKind::threshold_detector_1d: return in[0] < p[0] ? kPositive : kNegative;
    case FamilyKind::constant_classifier: return p[0];
    default: fail(ErrorCode::incompatible_family, "family has no scalar grid prediction");
  }
}

Tuple predict(const TrainedModel& model, std::span<const double> input) {
  const auto& family = model.family;
  const auto kind = family.kind();
  switch (kind) {
    case FamilyKind::table: {
      check_arity(table_key_arity(model.table), input.size(), kind);
      auto it = model.table.find(Tuple(input.begin(), input.end()));
      if (it == model.table.end()) return {family.as<TableFamily>().default_output};
      return it->second;
    }
    case FamilyKind::point_predictor_table:
      check_arity(table_key_arity(model.table), input.size(), kind);
      return lookup(model.table, input, "point-predictor table");
    case FamilyKind::interpolated_predictor_1param:
      check_arity(family.input_arity(), input.size(), kind);
      return interpolate(family.as<InterpolatedPredictor>(), model.params.at(0), input);
    default:
      check_arity(family.input_arity(), input.size(), kind);
      return {predict_grid_scalar(family, model.params, input)};
  }
}

std::size_t select_minimizer(std::span<const Tuple> candidates, std::span<const double> losses) {
  if (candidates.empty() || candidates.size() != losses.size()) {
    fail(ErrorCode::empty_candidate_set, "no candidates to select a minimizer from");
  }
  const double best = *std::min_element(losses.begin(), losses.end());
  std::size_t chosen = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (losses[i] > best + kTieTolerance) continue;
    if (chosen == candidates.size() || lexicographically_less(candidates[i], candidates[chosen])) chosen = i;
  }
  return chosen;
}

namespace {

void check_training_items(const HypothesisFamily& family, std::span<const WeightedSample> items) {
  if (items.empty()) fail(ErrorCode::incompatible_family, "no training items");
  const auto kind = family.kind();
  const std::size_t arity = items.front().input.size();
  for (const auto& item : items) {
    if (item.input.size() != arity) fail(ErrorCode::incompatible_family, "training inputs disagree on arity");
    if (!(item.weight >= 0.0)) fail(ErrorCode::incompatible_family, "negative training weight");
    if (family.is_classifier() && !is_label(item.target)) {
      fail(ErrorCode::incompatible_family, std::string(to_string(kind)) + " needs +-1 targets, got " +
                                               format_tuple(item.target));
    }
  }
  if (family.input_arity() != 0 && family.input_arity() != arity) {
    fail(ErrorCode::incompatible_family, std::string(to_string(kind)) + " expects input arity " +
                                             std::to_string(family.input_arity()) + ", got " + std::to_string(arity));
  }
  if (kind == FamilyKind::point_predictor_table) {
    const auto out = family.as<PointPredictorTable>().arity;
    for (const auto& item : items) {
      if (item.target.size() != out) fail(ErrorCode::incompatible_family, "point-predictor target arity mismatch");
    }
  }
}

TrainedModel train_table(const HypothesisFamily& family, std::span<const WeightedSample> items,
                         const LossFunction& loss) {
  std::map<Tuple, std::vector<const WeightedSample*>> groups;
  for (const auto& item : items) groups[item.input].push_back(&item);
  LookupTable table;
  for (const auto& [key, members] : groups) {
    std::vector<Tuple> candidates;
    if (family.kind() == FamilyKind::table) {
      candidates = {{kNegative}, {kPositive}};
    } else {
      std::set<Tuple> distinct;
      for (const auto* m : members) distinct.insert(m->target);
      candidates.assign(distinct.begin(), distinct.end());
    }
    std::vector<double> losses;
    for (const auto& c : candidates) {
      double s = 0.0;
      for (const auto* m : members) s += m->weight * loss(c, m->target);
      losses.push_back(s);
    }
    table.emplace(key, candidates[select_minimizer(candidates, losses)]);
  }
  return make_table_model(family, std::move(table));
}

}  // namespace

TrainedModel erm_train(const HypothesisFamily& family, std::span<const WeightedSample> items,
                       const LossFunction& loss, TieBreak) {
  check_training_items(family, items);
  if (family.is_table()) return train_table(family, items, loss);

  const auto& grid = family.parameter_grid();
  double total = 0.0;
  for (const auto& item : items) total += item.weight;
  std::vector<double> losses(grid.size(), 0.0);

  if (family.is_classifier()) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double s = 0.0;
      for (const auto& item : items) {
        const double pred = predict_grid_scalar(family, grid[g], item.input);
        s += item.weight * loss(std::span<const double>(&pred, 1), item.target);
      }
      losses[g] = normalized(s, total);
    }
  } else {
    const auto& f = family.as<InterpolatedPredictor>();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double s = 0.0;
      for (const auto& item : items) s += item.weight * loss(interpolate(f, grid[g][0], item.input), item.target);
      losses[g] = normalized(s, total);
    }
  }
  return make_grid_model(family, grid[select_minimizer(grid, losses)]);
}

double empirical_risk(const TrainedModel& model, std::span<const WeightedSample> items, const LossFunction& loss) {
  if (items.empty()) fail(ErrorCode::missing_targets, "empirical risk over no items");
  double s = 0.0, total = 0.0;
  for (const auto& item : items) {
    s += item.weight * loss(predict(model, item.input), item.target);
    total += item.weight;
  }
  return normalized(s, total);
}

std::vector<TrainedModel> enumerate_binary_tables(const std::vector<Tuple>& keys) {
  if (keys.empty()) fail(ErrorCode::empty_candidate_set, "no keys to enumerate tables over");
  if (keys.size() > 20) fail(ErrorCode::empty_candidate_set, "too many keys to enumerate binary tables");
  const std::size_t k = keys.size();
  std::vector<TrainedModel> out;
  out.reserve(std::size_t{1} << k);
  for (std::size_t code = 0; code < (std::size_t{1} << k); ++code) {
    LookupTable table;
    for (std::size_t j = 0; j < k; ++j) {
      const bool bit = (code >> (k - 1 - j)) & 1U;
      table[keys[j]] = {bit ? kPositive : kNegative};
    }
    out.push_back(make_table_model(HypothesisFamily(TableFamily{}), std::move(table)));
  }
  return out;
}

}  // namespace entangle
