#pragma once

#include <stdexcept>
#include <string>

namespace dklab {

/// Invalid or incomplete experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown: NaN/inf in a state, stability violation (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& tag, const std::string& what)
      : std::runtime_error(tag + ": " + what), tag_(tag) {}
  const std::string& tag() const { return tag_; }

 private:
  std::string tag_;
};

/// Two fields (or a field and an operator) live on different grids.
class GridMismatch : public std::invalid_argument {
 public:
  explicit GridMismatch(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace dklab
