#pragma once

#include <stdexcept>
#include <string>

namespace attnsel {

// Malformed ABST file, catalog, sidecar or model graph.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed a value outside an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateVectorError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A domain-type invariant (box inside image, token box inside grid) is broken.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Model execution failed; the message carries the model identifier.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace attnsel
