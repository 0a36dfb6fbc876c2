#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spsa {

/// Base class for every error raised by the library. Runtime/data failures.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A numerical precondition of an estimator was violated.
class EstimatorError : public Error
{
public:
  using Error::Error;
};

/// Malformed or inconsistent file contents. Carries the 1-based line number
/// when one applies (0 otherwise).
class FormatError : public Error
{
public:
  FormatError(const std::string& what, std::size_t line = 0)
    : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line)
  {
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Invalid configuration or usage. `key()` names the offending config key.
class ConfigError : public Error
{
public:
  ConfigError(const std::string& key, const std::string& what)
    : Error(key.empty() ? what : key + ": " + what), key_(key)
  {
  }

  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

} // namespace spsa
