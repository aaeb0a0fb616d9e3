#pragma once

#include <stdexcept>
#include <string>

namespace iclopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (corpus files, index sidecars).
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed scenario file, or no scripted entry matches a request.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// An ordered script ran out of replies.
class ScenarioExhausted : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

/// Failure talking to a model provider. Transient errors are retried by the
/// gateway; permanent ones (and transient ones after the retry budget) are not.
class BackendError : public Error {
 public:
  enum class Kind { kTransient, kPermanent };

  BackendError(Kind kind, int status, const std::string& what)
      : Error(what), kind_(kind), status_(status) {}

  Kind kind() const noexcept { return kind_; }
  bool transient() const noexcept { return kind_ == Kind::kTransient; }
  /// HTTP status, or 0 for transport-level failures.
  int status() const noexcept { return status_; }

 private:
  Kind kind_;
  int status_;
};

}  // namespace iclopt
