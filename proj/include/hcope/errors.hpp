#pragma once

#include <stdexcept>
#include <string>

namespace hcope {

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Behavior policy assigns zero probability to an observed action (CLI exit code 3).
class SupportViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure: zero weight columns, infinite KL, degenerate ranges (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed dataset, policy or config file.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hcope

#include <functional>

namespace hcope {

/// Non-fatal diagnostics (BCa fallback, mixture-invariant drift, clamped radicands).
/// They go to stderr unless a sink is installed; a null sink restores stderr.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace hcope
