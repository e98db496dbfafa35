#pragma once

#include <stdexcept>
#include <string>

namespace innlat {

// Error categories. The numeric value of each kind is the CLI exit status.
enum class ErrorKind : int {
  config = 2,
  io = 3,
  numeric = 4,
  invariant = 5,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
  ErrorKind kind_;
};

// Shape or dimension mismatch between operands.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

// Non-finite values produced or consumed by a numeric routine.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Operation called on an object in the wrong lifecycle state.
struct StateError : Error {
  explicit StateError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

// Invalid hyperparameter or argument value.
struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Input data that cannot support the requested operation.
struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

// Malformed file or failed read/write.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace innlat
