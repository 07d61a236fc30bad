#pragma once

#include <stdexcept>
#include <string>

namespace rsmc {

// Argument outside an operation's domain (t outside [0,1], eps >= 8, N < K, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Evaluation at a point where a coefficient vanishes (alpha(t) = 0).
struct SingularityError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Grid or rejection oracle cannot certify its own accuracy.
struct OracleRefusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every weight is zero.
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rsmc
