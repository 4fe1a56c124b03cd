#pragma once

#include "graspflow/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace graspflow::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this platform");

/// Appends little-endian primitives to a byte buffer.
class Writer {
 public:
  void bytes(std::string_view b) { buf_.append(b); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void text(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  /// Row-major dump of a dense matrix (no shape header).
  template <typename Derived>
  void matrix(const Eigen::MatrixBase<Derived>& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

/// Bounds-checked reader; every overrun throws FormatError.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::string text(std::size_t max_len = std::size_t{1} << 30) {
    const auto n = u64();
    if (n > max_len) throw FormatError("text block length out of range");
    return std::string(bytes(n));
  }
  Matrix matrix(Index rows, Index cols) {
    if (rows < 0 || cols < 0) throw FormatError("negative matrix shape");
    need(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(double));
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw FormatError("unexpected end of data (truncated file?)");
  }
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// 64-bit FNV-1a, used as a content checksum and config hash.
std::uint64_t fnv1a(std::string_view data);

}  // namespace graspflow::io
