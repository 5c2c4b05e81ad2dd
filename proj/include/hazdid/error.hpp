#pragma once

#include <stdexcept>
#include <string>

namespace hazdid {

// Raised for every recoverable estimation, ingestion or configuration
// failure. The message carries the user-facing reason.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Distinguishes file-system failures so callers can map them to exit code 1.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace hazdid
