#pragma once

#include <stdexcept>
#include <string>

namespace hoigraph {

/// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input lies outside the operation's domain (empty list, degenerate box, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed configuration, file or command-line input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hoigraph
