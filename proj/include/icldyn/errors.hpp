#pragma once

#include <stdexcept>
#include <string>

namespace icldyn {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Tokenizer output is not prefix-stable at a cue/label boundary.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Two classes share the same first label token.
class UniquenessError : public Error {
 public:
  using Error::Error;
};

/// The token at a computed label position is not the expected label token.
class MisalignmentError : public Error {
 public:
  MisalignmentError(std::size_t example, const std::string& what)
      : Error(what), example_(example) {}
  std::size_t example() const noexcept { return example_; }

 private:
  std::size_t example_;
};

class TransformError : public Error {
 public:
  using Error::Error;
};

class DegenerateDistributionError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

class TaskInfeasibleError : public Error {
 public:
  using Error::Error;
};

class SummaryError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised by backends. `retryable()` distinguishes transient transport
/// failures from permanent request errors.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class TokenLimitError : public BackendError {
 public:
  explicit TokenLimitError(const std::string& what)
      : BackendError(what, false) {}
};

class ProtocolError : public BackendError {
 public:
  explicit ProtocolError(const std::string& what)
      : BackendError(what, false) {}
};

}  // namespace icldyn
