#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "specgeo/error.hpp"
#include "specgeo/io.hpp"

namespace specgeo::io {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");
static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::string encode_matrix(const spectral::Matrix& m, Dtype dtype) {
  std::string out;
  const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
  out.reserve(kMatrixHeaderSize + static_cast<std::size_t>(m.size()) * width);
  out.append(kMatrixMagic);
  put(out, static_cast<std::uint32_t>(dtype));
  put(out, static_cast<std::uint64_t>(m.rows()));
  put(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (dtype == Dtype::f32) put(out, static_cast<float>(m(i, j)));
      else put(out, m(i, j));
    }
  return out;
}

spectral::Matrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < kMatrixMagic.size() || bytes.substr(0, kMatrixMagic.size()) != kMatrixMagic)
    fail(Errc::bad_magic, "not a SPECGEO1 matrix file");
  if (bytes.size() < kMatrixHeaderSize) fail(Errc::size_mismatch, "truncated matrix header");
  const auto code = get<std::uint32_t>(bytes, 8);
  if (code != static_cast<std::uint32_t>(Dtype::f32) && code != static_cast<std::uint32_t>(Dtype::f64))
    fail(Errc::bad_dtype, "unknown dtype code " + std::to_string(code));
  const std::size_t width = code == 1 ? 4 : 8;
  const auto rows = get<std::uint64_t>(bytes, 12);
  const auto cols = get<std::uint64_t>(bytes, 20);
  const std::uint64_t limit = std::numeric_limits<std::uint32_t>::max();
  if (rows > limit || cols > limit || (cols != 0 && rows > (limit * 8) / cols))
    fail(Errc::size_mismatch, "matrix dimensions too large");
  const std::uint64_t expected = rows * cols * width;
  if (bytes.size() - kMatrixHeaderSize != expected)
    fail(Errc::size_mismatch, "payload holds " + std::to_string(bytes.size() - kMatrixHeaderSize) +
                                  " bytes, header implies " + std::to_string(expected));

  spectral::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = kMatrixHeaderSize;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, offset += width)
      m(i, j) = width == 4 ? static_cast<double>(get<float>(bytes, offset)) : get<double>(bytes, offset);
  return m;
}

void write_matrix(const spectral::Matrix& m, const std::filesystem::path& path, Dtype dtype) {
  write_file(path, encode_matrix(m, dtype));
}

spectral::Matrix read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::io_failure, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path.string());
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace specgeo::io
