#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tlsqkd {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Raised when a wire buffer is truncated or its declared lengths do not add up.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

/// Standard alphabet with '=' padding.
std::string base64_encode(ByteView data);
/// Throws DecodeError on characters outside the alphabet or bad padding.
Bytes base64_decode(std::string_view text);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string to_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

/// Appends big-endian integers and length-prefixed blocks to a buffer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  void u8(std::uint8_t v) { buf().push_back(v); }
  void u16(std::uint16_t v);
  void u24(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(ByteView data) { buf().insert(buf().end(), data.begin(), data.end()); }

  /// Reserves a big-endian length prefix of `width` bytes and returns its
  /// offset; `close_length` patches it once the body has been written.
  std::size_t open_length(int width);
  void close_length(std::size_t offset, int width);

  Bytes take() { return std::move(own_); }
  const Bytes& bytes() const { return out_ ? *out_ : own_; }

 private:
  Bytes& buf() { return out_ ? *out_ : own_; }

  Bytes own_;
  Bytes* out_ = nullptr;
};

/// Cursor over an immutable buffer. Every read is bounds-checked.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u24();
  std::uint64_t u64();
  ByteView raw(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  bool empty() const { return remaining() == 0; }
  void expect_end(const char* what) const;

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace tlsqkd
