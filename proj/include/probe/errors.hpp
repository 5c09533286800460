#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace probe {

/// Base for every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two volumes that must share a grid do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid value handed to a numeric routine (empty sample, p outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment configuration, manifest, or attribute set.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace probe
