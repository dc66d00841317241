#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppl {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class AxisError : public Error {
 public:
  using Error::Error;
};

class AutogradError : public Error {
 public:
  using Error::Error;
};

class DistributionError : public Error {
 public:
  using Error::Error;
};

class NotReparameterizable : public DistributionError {
 public:
  using DistributionError::DistributionError;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class NameCollision : public ModelError {
 public:
  using ModelError::ModelError;
};

class MissingGuide : public ModelError {
 public:
  using ModelError::ModelError;
};

class InferenceError : public Error {
 public:
  using Error::Error;
};

/// A loss or log-joint became NaN/inf during fitting.
class NumericalError : public InferenceError {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : InferenceError(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class SerializationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppl
