#pragma once

#include <stdexcept>
#include <string>

namespace ragutil {

// Maps onto the CLI exit codes: usage/config = 1, data = 2, endpoint = 3.
enum class ErrorKind { Usage, Data, Endpoint, Protocol };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// Parse failure with a 1-based line number (0 when not line-oriented).
struct ParseError : DataError {
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Network failure that survived all retries. Resumable from cache.
struct TransientError : Error {
  explicit TransientError(const std::string& what) : Error(ErrorKind::Endpoint, what) {}
};

// Endpoint answered, but not with the agreed wire format.
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::Protocol, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Endpoint:
    case ErrorKind::Protocol: return 3;
  }
  return 1;
}

}  // namespace ragutil
