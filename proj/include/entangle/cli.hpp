#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace entangle::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kEffectViolated = 2,
  kInternalError = 3,
};

/// Environment variable naming the default output root for `run`/`decompose`.
inline constexpr const char* kOutputRootEnv = "ENTANGLE_OUTPUT_ROOT";

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace entangle::cli
