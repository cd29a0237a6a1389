#pragma once

#include <stdexcept>
#include <string>

namespace clborrow {

/// Invalid configuration: malformed weight spec, bad level, bad grid.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data outside an operation's domain (empty sample, unknown arm, boundary MLE).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed dataset (parse failures, schema violations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed: singular matrix, divergence, separation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clborrow
