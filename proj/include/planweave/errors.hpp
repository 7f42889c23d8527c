#pragma once

#include <stdexcept>
#include <string>

namespace planweave {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty prompt, wrong role, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed structured input; `what()` carries position/field information.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// The LLM output contained no recognizable step list.
class UnparseablePlan : public Error {
 public:
  explicit UnparseablePlan(std::string raw)
      : Error("unparseable plan: no numbered steps found"), raw_text_(std::move(raw)) {}
  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  std::string raw_text_;
};

enum class BackendErrorKind { transport, rate_limit, refusal, malformed, unsupported, missing_entry };

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  BackendErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept {
    return kind_ == BackendErrorKind::transport || kind_ == BackendErrorKind::rate_limit;
  }

 private:
  BackendErrorKind kind_;
};

/// Wraps a failure that happened while processing one plan step (1-based).
class StepError : public Error {
 public:
  StepError(int step, const std::string& msg)
      : Error("step=" + std::to_string(step) + ": " + msg), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class CacheMiss : public Error {
 public:
  using Error::Error;
};

class CacheIntegrityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace planweave
