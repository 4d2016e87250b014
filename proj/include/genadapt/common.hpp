#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace genadapt {

// Guard thresholds shared by the numeric and graph code paths.
inline constexpr double kNormGuard = 1e-12;  // cosine / norm denominators
inline constexpr double kLogGuard = 1e-30;   // log(max(x, kLogGuard))
inline constexpr double kRowGuard = 1e-8;    // perturbation rows below this are degenerate

// Usage/config errors map to process exit code 1, numeric aborts to 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-fatal diagnostics (degenerate cosines, collapsing rows, hash
// mismatches). Default handler writes one line to stderr; tests may
// install their own handler to capture messages.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);
void warn(const std::string& msg);

}  // namespace genadapt
