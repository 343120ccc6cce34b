#ifndef TREELM_COMMON_HPP
#define TREELM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace treelm {

// All runtime math is double precision; checkpoints store 32-bit floats.
using real = double;

enum class ErrorCode {
  Io,           // file missing / unreadable / unwritable
  Format,       // malformed input file
  Invalid,      // contract violation (bad arguments, illegal transition, ...)
  Numeric,      // non-finite loss or parameter blow-up
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const std::string kUnkWord = "<unk>";
inline const std::string kUnkPos = "<unkpos>";

}  // namespace treelm

#endif  // TREELM_COMMON_HPP
