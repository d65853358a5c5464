#pragma once

#include <stdexcept>
#include <string>

namespace medi {

// Base for every error raised by the toolkit. Callers that only want to
// report and exit can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace medi
