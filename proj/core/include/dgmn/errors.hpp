#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dgmn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents. Messages carry both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, unknown variants, malformed configs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autograd graph (double backward, non-scalar loss root).
class GraphError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(std::int64_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace dgmn
