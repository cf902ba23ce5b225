#pragma once

#include <stdexcept>
#include <string>

namespace tscan {

enum class ErrorKind { Input, Numeric, Config };

/// Failure raised by any pipeline stage. The kind maps onto a CLI exit code.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) { return {ErrorKind::Input, what}; }
inline Error numeric_error(const std::string& what) { return {ErrorKind::Numeric, what}; }
inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }

/// Error tagged with the pipeline stage that produced it.
class StageError : public Error {
public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.kind(), "stage=" + stage + ": " + inner.what()),
        stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return 1;
    case ErrorKind::Numeric: return 2;
    case ErrorKind::Config: return 3;
  }
  return 1;
}

}  // namespace tscan
