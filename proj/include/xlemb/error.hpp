#pragma once

#include <stdexcept>
#include <string>

namespace xlemb {

// Process exit codes shared between the library error taxonomy and the CLI:
// 0 success, 2 validation/parameter error, 3 I/O or format error,
// 4 training divergence.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  io = 3,
  divergence = 4,
};

class Error : public std::runtime_error {
public:
  Error(const std::string& msg, ExitCode code)
      : std::runtime_error(msg), code_(code) {}

  ExitCode exit_code() const noexcept { return code_; }

private:
  ExitCode code_;
};

// Bad values or broken invariants in otherwise well-formed inputs.
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& msg)
      : Error(msg, ExitCode::validation) {}
};

// Incompatible tensor/matrix shapes.
class ShapeError : public ValidationError {
public:
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

// Out-of-range or inconsistent caller-supplied parameters.
class ParameterError : public ValidationError {
public:
  explicit ParameterError(const std::string& msg) : ValidationError(msg) {}
};

// A vector with (near-)zero norm where a direction is required.
class DegenerateVectorError : public ValidationError {
public:
  explicit DegenerateVectorError(const std::string& msg)
      : ValidationError(msg) {}
};

// File exists but its contents do not parse as the expected format.
class FormatError : public Error {
public:
  explicit FormatError(const std::string& msg) : Error(msg, ExitCode::io) {}
};

// Payload shorter than its header promises.
class TruncationError : public FormatError {
public:
  explicit TruncationError(const std::string& msg) : FormatError(msg) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg, ExitCode::io) {}
};

// Non-finite loss or gradients during training.
class DivergenceError : public Error {
public:
  explicit DivergenceError(const std::string& msg)
      : Error(msg, ExitCode::divergence) {}
};

}  // namespace xlemb
