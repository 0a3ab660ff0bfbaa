#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace entangle {

enum class ErrorCode {
  cycle_detected,
  dangling_edge,
  duplicate_node_id,
  duplicate_edge,
  invalid_slice,
  missing_parent_output,
  trainer_failed,
  incompatible_family,
  arity_mismatch,
  invalid_input,
  missing_targets,
  invalid_distribution,
  invalid_dataset,
  empty_support,
  empty_candidate_set,
  target_not_found,
  incompatible_replacement,
  degenerate_sample,
  config_invalid,
  expected_effect_violated,
  io_failure,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace entangle
