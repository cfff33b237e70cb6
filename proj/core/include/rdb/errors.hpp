#pragma once

#include <stdexcept>
#include <string>

namespace rdb {

/// Raised when inputs violate a documented contract (bad file, bad flag,
/// degenerate data). The CLI maps these to exit code 1.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numerical routine fails to converge or an internal
/// invariant breaks. The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rdb
