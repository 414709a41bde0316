#pragma once

#include <stdexcept>
#include <string>

namespace aggfolio {

enum class ErrorKind {
  Domain,     // non-finite or out-of-domain input
  Parameter,  // invalid tuning parameter
  Shape,      // dimension mismatch
  Data,       // malformed or inconsistent data
  Schema,     // unknown column or frequency tag
  Numerical,  // degenerate numerical state
  Capacity,   // enumeration too large
  Config,     // invalid experiment configuration
  Invariant,  // a checked invariant failed
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace aggfolio
