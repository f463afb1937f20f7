#pragma once

#include <stdexcept>
#include <string>

namespace peot {

// Error categories. The numeric values of Config/Data/Numeric double as CLI
// exit codes and C API status codes.
enum class ErrorKind {
  InvalidInput = 1,
  Config = 2,
  Data = 3,
  Numeric = 4,
  Io = 5,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& message) {
  throw Error(ErrorKind::InvalidInput, message);
}

[[noreturn]] inline void throw_config(const std::string& message) {
  throw Error(ErrorKind::Config, message);
}

[[noreturn]] inline void throw_data(const std::string& message) {
  throw Error(ErrorKind::Data, message);
}

[[noreturn]] inline void throw_numeric(const std::string& message) {
  throw Error(ErrorKind::Numeric, message);
}

[[noreturn]] inline void throw_io(const std::string& message) {
  throw Error(ErrorKind::Io, message);
}

}  // namespace peot
