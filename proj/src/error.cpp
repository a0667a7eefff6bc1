#include "specgeo/error.hpp"

namespace specgeo {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_finite: return "non_finite";
    case Errc::degenerate: return "degenerate";
    case Errc::divergence: return "divergence";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_dtype: return "bad_dtype";
    case Errc::size_mismatch: return "size_mismatch";
    case Errc::io_failure: return "io_failure";
    case Errc::parse_failure: return "parse_failure";
  }
  return "unknown";
}

}  // namespace specgeo
