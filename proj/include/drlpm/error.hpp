#pragma once

#include <stdexcept>
#include <string>

namespace drlpm {

// Input files and market data: unreadable files, malformed CSV, failed alignment.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or violated run-level invariants.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mathematical precondition failures (nonpositive price relatives, ruinous cost, empty input).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Tensor or vector shapes that do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Calls made in the wrong order (step after done, backward before forward).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace drlpm
