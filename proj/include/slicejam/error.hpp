#pragma once

#include <stdexcept>
#include <string>

namespace slicejam {

// Invalid user-supplied parameters (bad ranges, unknown keys, infeasible sizes).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside the mathematical domain of an operation (e.g. snr <= 0).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A simulator invariant was broken; the run cannot continue.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

// A function was called outside its contract (e.g. routing a NACK for a request that did not fail).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace slicejam
