#pragma once

#include <stdexcept>
#include <string>

namespace dronekey {

/// Base class for every recoverable error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration value (non-invertible intrinsics, bad dims, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor/matrix dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Projection of a point with non-positive depth.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// A rendered frame would place a keypoint behind the camera.
class VisibilityError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometry (collinear points, rank-deficient covariance, ...).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Missing or corrupt file; message names the path.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; message carries the line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& msg)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(-1) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Training aborted (NaN loss, empty split, ...).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dronekey
