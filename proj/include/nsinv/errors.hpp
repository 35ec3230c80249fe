#pragma once

#include <stdexcept>
#include <string>

namespace nsinv {

/// Invalid parameters or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that does not match what an operation expects.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (e.g. t outside [0, T]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A linear solve failed or a run was aborted by a watchdog.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nsinv
