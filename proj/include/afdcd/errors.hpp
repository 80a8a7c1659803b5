#pragma once

#include <stdexcept>
#include <string>

namespace afdcd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible extents, channel counts or divisibility.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range hyperparameter or an empty sample set.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input for which an operation is undefined, e.g. a zero vector under cosine distance.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Metric requested on data that does not define it (e.g. mIoU with every class empty).
class UndefinedResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace afdcd
