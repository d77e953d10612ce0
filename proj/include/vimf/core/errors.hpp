#pragma once

#include <stdexcept>
#include <string>

namespace vimf {

/// Raised when a loader meets a malformed record. Carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A loss, gradient or logit stopped being finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called on a model in the wrong fitting mode.
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Metric is not defined for the given inputs (e.g. AUC with one class).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace vimf
