#pragma once

#include <stdexcept>
#include <string>

namespace nevai {

// Bad input: out-of-range parameters, malformed files, unsupported requests.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Coefficient index past what a weight-defined family was resolved to.
class ResolutionError : public ValidationError {
 public:
  ResolutionError(const std::string& what, std::size_t max_index)
      : ValidationError(what), max_index_(max_index) {}
  std::size_t max_safe_index() const { return max_index_; }

 private:
  std::size_t max_index_;
};

}  // namespace nevai
