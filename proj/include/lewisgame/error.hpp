#pragma once

#include <stdexcept>
#include <string>

namespace lewisgame {

// Error categories; the CLI maps these onto process exit codes.
enum class ErrorKind {
  Config,       // bad configuration file or option value
  Io,           // filesystem failure
  Format,       // malformed on-disk payload (LFS1, LGCK, CSV, manifest)
  Dimension,    // tensor/feature dimensionality mismatch
  Parameter,    // invalid argument to a library operation
  Distribution, // probability vector violates its contract
  Degenerate,   // zero-norm vector or undefined correlation
  Dataset,      // store/split cannot support the requested sampling
  Grouping,     // subgroup analysis has no usable group structure
  Guard,        // enumeration guard exceeded (V too large)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace lewisgame
