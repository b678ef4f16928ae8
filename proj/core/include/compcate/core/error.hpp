#pragma once

#include <stdexcept>
#include <string>

namespace compcate {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string path = {})
      : std::runtime_error(message), kind_(kind), path_(std::move(path)) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }
  // Field path for config diagnostics ("dgp.k"), empty otherwise.
  const std::string& path() const { return path_; }

 private:
  ErrorKind kind_;
  std::string path_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error(ErrorKind::kUsage, message) {}
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, std::string path = {})
      : Error(ErrorKind::kConfig, message, std::move(path)) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error(ErrorKind::kData, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorKind::kNumeric, message) {}
};

const char* error_kind_name(ErrorKind kind);

}  // namespace compcate
