#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hetsgd {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Constants outside the range where a bound applies.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An algorithm tried something the protocol forbids (e.g. moving time backward).
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Config problems. Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace hetsgd
