#pragma once

#include <stdexcept>
#include <string>

namespace carepred {

// Base for every error the library raises. kind() is a stable short tag used
// by the CLI when printing machine-parsable failure lines.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define CAREPRED_DEFINE_ERROR(Name, tag)                       \
  class Name : public Error {                                  \
   public:                                                     \
    using Error::Error;                                        \
    const char* kind() const noexcept override { return tag; } \
  };

/// Malformed input text (CSV/JSONL); messages carry the line number.
CAREPRED_DEFINE_ERROR(ParseError, "parse")
/// Well-formed value outside its domain (activity id, timestamp order).
CAREPRED_DEFINE_ERROR(DomainError, "domain")
/// Invalid configuration value or empty dataset.
CAREPRED_DEFINE_ERROR(ConfigError, "config")
/// Shape mismatch or caller violated a precondition.
CAREPRED_DEFINE_ERROR(ContractError, "contract")
/// Non-finite value produced or consumed by the numeric core.
CAREPRED_DEFINE_ERROR(NumericError, "numeric")
/// Checkpoint with an unrecognized format version.
CAREPRED_DEFINE_ERROR(FormatVersionError, "format-version")
/// Truncated or corrupted checkpoint (checksum mismatch).
CAREPRED_DEFINE_ERROR(IntegrityError, "integrity")
/// File could not be opened, read or written.
CAREPRED_DEFINE_ERROR(IoError, "io")

#undef CAREPRED_DEFINE_ERROR

}  // namespace carepred
