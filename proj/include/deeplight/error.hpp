#pragma once

#include <stdexcept>
#include <string>

namespace deeplight {

/// Bad or inconsistent configuration (shapes, hyperparameters, config keys).
/// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input data that cannot be processed (empty sets, missing classes, bad files).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deeplight
