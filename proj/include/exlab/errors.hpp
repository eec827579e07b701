#pragma once

#include <stdexcept>
#include <string>

namespace exlab {

// Invalid numeric domain: non-positive variance, t = 0 where t >= 1 is needed.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Shapes or dimensions that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A symmetric factorization failed (matrix not positive definite).
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a structural contract (block structure, sample counts, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContextLengthError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace exlab
