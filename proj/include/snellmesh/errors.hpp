#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snell {

// Violated precondition of a library call (bad sizes, bad arguments).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The model broke one of its own invariants while being evaluated,
// e.g. a transition density that is not strictly positive.
class ModelContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EnumerationTooLarge : public std::runtime_error {
 public:
  EnumerationTooLarge(const std::string& what, std::size_t cap)
      : std::runtime_error(what + " exceeds enumeration cap " + std::to_string(cap)), cap_(cap) {}
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t cap_;
};

// eta_{k-1}(G_{k-1}) == 0: the normalized flow is undefined from `step` on.
class DegenerateFlowError : public std::runtime_error {
 public:
  explicit DegenerateFlowError(std::size_t step)
      : std::runtime_error("degenerate flow: zero criteria mass entering step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Malformed configuration or model file (unknown key, wrong type).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExtinctionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snell
