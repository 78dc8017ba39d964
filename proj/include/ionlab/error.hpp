#pragma once

#include <stdexcept>
#include <string>

namespace ionlab {

// Categories map onto the CLI exit codes: usage/parse = 1, physics/solver = 2,
// fit = 3.
enum class ErrorKind { usage = 1, parse = 1, physics = 2, fit = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Invalid argument to a physics routine (negative frequency, missing level, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::physics, what) {}
};

/// Iterative solver did not converge; carries the best residual reached.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(ErrorKind::physics, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class IntegratorError : public Error {
 public:
  explicit IntegratorError(const std::string& what) : Error(ErrorKind::physics, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(ErrorKind::parse, format(message, line, column)),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const noexcept { return message_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& message, int line, int column) {
    if (line <= 0) return message;
    return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
           message;
  }

  std::string message_;
  int line_;
  int column_;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, double best_residual = 0.0)
      : Error(ErrorKind::fit, what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace ionlab
