#pragma once

#include <stdexcept>
#include <string>

namespace arabeval {

// Base for every failure the toolkit reports. The CLI maps ConfigError to
// exit code 2 and everything else to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace arabeval
