// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (model shape, hyperparameters, run config keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset input. `line()` is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// NaN/Inf encountered in a loss, gradient, or input vector.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ModelFormatError : public Error {
 public:
  enum class Kind { io, not_model_file, unsupported_version, truncated, manifest_mismatch, inconsistent_bundle };

  ModelFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace tcnn
