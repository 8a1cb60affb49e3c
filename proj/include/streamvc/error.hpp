#pragma once

#include <stdexcept>
#include <string>

namespace streamvc {

// Root of every error raised by the runtime.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or weight shapes that do not line up. `dimension` names the
// offending axis (e.g. "in_channels", "frames").
class ShapeError : public Error {
 public:
  ShapeError(std::string dimension, const std::string& message)
      : Error(message), dimension_(std::move(dimension)) {}
  const std::string& dimension() const { return dimension_; }

 private:
  std::string dimension_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state that does not allow it (e.g. step after flush).
class StateError : public Error {
 public:
  using Error::Error;
};

// Weight store problems. `layer` is empty when the failure is not tied to
// a particular tensor.
class WeightError : public Error {
 public:
  WeightError(std::string layer, const std::string& message)
      : Error(message), layer_(std::move(layer)) {}
  const std::string& layer() const { return layer_; }

 private:
  std::string layer_;
};

class MissingLayerError : public WeightError {
 public:
  using WeightError::WeightError;
};

class WeightShapeError : public WeightError {
 public:
  using WeightError::WeightError;
};

class ChecksumError : public WeightError {
 public:
  explicit ChecksumError(const std::string& message) : WeightError("", message) {}
};

class VersionError : public WeightError {
 public:
  explicit VersionError(const std::string& message) : WeightError("", message) {}
};

// Malformed file (weights manifest, WAV container, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace streamvc
