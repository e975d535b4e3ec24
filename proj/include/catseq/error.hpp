#pragma once

#include <stdexcept>
#include <string>

namespace catseq {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kInvalidArgument = 2,
  kParse = 3,
  kSchema = 4,
  kDiverged = 5,
  kIo = 6,
  kNumeric = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

const char* to_string(ErrorKind kind) noexcept;

}  // namespace catseq
