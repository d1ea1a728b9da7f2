#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nvdepth {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  EmptySpectrum,
  NonConvergence,
  DegenerateData,
  Undetectable,
  InconsistentData,
  ReadoutTooNoisy,
  Undefined,
  TransportFailure,
  Io,
  Format,
  VersionMismatch,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries a stable code so the CLI can
// emit a machine-readable error object.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nvdepth
