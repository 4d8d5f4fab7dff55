#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdt {

enum class Errc {
  format,                 // malformed file contents
  unsupported,            // valid input this library does not handle
  io,                     // open/read/write failures
  degenerate_signal,      // silent or constant input where variation is required
  dimension,              // vector/matrix size mismatch
  alignment,              // frame sets that do not line up
  invalid_argument,       // out-of-range parameter
  training_diverged,      // non-finite parameter during SGD
  degenerate_references,  // BSS-EVAL Gram matrix cannot be factored
};

inline std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::format: return "format error";
    case Errc::unsupported: return "unsupported";
    case Errc::io: return "I/O error";
    case Errc::degenerate_signal: return "degenerate signal";
    case Errc::dimension: return "dimension mismatch";
    case Errc::alignment: return "alignment error";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::training_diverged: return "training diverged";
    case Errc::degenerate_references: return "degenerate references";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cdt
