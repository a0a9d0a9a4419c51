#pragma once

#include <cassert>
#include <string>
#include <utility>
#include <variant>

namespace peel {

// Error codes shared across the library. Operations that can fail return
// Result<T>; errors that are ordinary outcomes (a signature that is simply
// not in the database) are modelled as values instead.
enum class Errc {
  NotPe,
  Truncated,
  Malformed,
  EmptyInput,
  EmptyDump,
  OepOutOfRange,
  BadRecipe,
  SignatureMismatch,
  NotSupported,
  ParseError,
  StubInconsistent,
  NoDumps,
  NegativeApf,
  IoError,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::NotPe: return "NotPe";
    case Errc::Truncated: return "Truncated";
    case Errc::Malformed: return "Malformed";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyDump: return "EmptyDump";
    case Errc::OepOutOfRange: return "OepOutOfRange";
    case Errc::BadRecipe: return "BadRecipe";
    case Errc::SignatureMismatch: return "SignatureMismatch";
    case Errc::NotSupported: return "NotSupported";
    case Errc::ParseError: return "ParseError";
    case Errc::StubInconsistent: return "StubInconsistent";
    case Errc::NoDumps: return "NoDumps";
    case Errc::NegativeApf: return "NegativeApf";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

struct Error {
  Errc code;
  std::string message;
};

template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Errc code) : v_(Error{code, errc_name(code)}) {}
  Result(Errc code, std::string message) : v_(Error{code, std::move(message)}) {}
  Result(Error err) : v_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() & { assert(ok()); return std::get<T>(v_); }
  const T& value() const& { assert(ok()); return std::get<T>(v_); }
  T&& value() && { assert(ok()); return std::get<T>(std::move(v_)); }

  const T& operator*() const& { return value(); }
  T& operator*() & { return value(); }
  const T* operator->() const { return &value(); }
  T* operator->() { return &value(); }

  Errc error() const { assert(!ok()); return std::get<Error>(v_).code; }
  const std::string& message() const { assert(!ok()); return std::get<Error>(v_).message; }
  const Error& err() const { assert(!ok()); return std::get<Error>(v_); }

 private:
  std::variant<T, Error> v_;
};

// For operations with no interesting success payload.
using Status = Result<std::monostate>;

inline Status ok_status() { return Status(std::monostate{}); }

}  // namespace peel
