#pragma once

#include <stdexcept>
#include <string>

namespace gibbs {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Parameters outside the admissible domain of a density family.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Singular systems, solver non-convergence, non-finite losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (IDX, checkpoints, config).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gibbs
