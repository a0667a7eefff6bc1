#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace specgeo {

enum class Errc {
  invalid_argument,
  non_finite,
  degenerate,
  divergence,
  bad_magic,
  bad_dtype,
  size_mismatch,
  io_failure,
  parse_failure,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the toolkit carries one of the codes above so that
// callers (and the CLI) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const char* what) {
  if (!cond) throw Error(code, what);
}

}  // namespace specgeo
