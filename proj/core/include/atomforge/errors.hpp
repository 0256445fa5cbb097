#pragma once

#include <stdexcept>
#include <string>

namespace atomforge {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { Config = 2, Model = 3, Io = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Missing file, unknown key, malformed value or violated type invariant.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// A model or planner cannot produce a valid result for its inputs
/// (infeasible plan, non-converged fit, unbound thermal state, ...).
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorKind::Model, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace atomforge
