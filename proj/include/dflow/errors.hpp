#pragma once

#include <stdexcept>
#include <string>

namespace dflow {

/// Argument outside the mathematical domain of an operation (eps <= 0, odd grid, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Field data containing NaN/Inf, or with an unexpected channel count.
class InvalidFieldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent map chain, e.g. maps on different grids.
class ChainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  enum class Code { Open, MagicMismatch, VersionMismatch, KindMismatch, Truncated, Malformed };

  IoError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace dflow
