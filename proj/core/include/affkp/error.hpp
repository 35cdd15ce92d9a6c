#pragma once

#include <stdexcept>
#include <string>

namespace affkp {

// Error categories map 1:1 onto CLI exit codes so scripted runs can triage
// failures: 2 = config, 3 = data, 4 = model, 5 = anything else.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg, int exit_code = 5)
      : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg, 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg, 3) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& msg) : Error(msg, 4) {}
};

}  // namespace affkp
