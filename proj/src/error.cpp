#include "catseq/error.hpp"

namespace catseq {

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
      return "invalid argument";
    case ErrorKind::kParse:
      return "parse error";
    case ErrorKind::kSchema:
      return "schema error";
    case ErrorKind::kDiverged:
      return "training diverged";
    case ErrorKind::kIo:
      return "i/o error";
    case ErrorKind::kNumeric:
      return "numerical error";
  }
  return "error";
}

}  // namespace catseq
