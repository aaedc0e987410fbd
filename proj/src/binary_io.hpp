#pragma once

// Little-endian encoding helpers shared by every on-disk format. Each format
// is: 4-byte ASCII magic, body, then CRC32 (IEEE) over every byte after the
// magic, stored u32 LE.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dynaprune/error.hpp"

namespace dynaprune::detail {

using Magic = std::array<char, 4>;

inline std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len) {
  const auto* p = static_cast<const Bytef*>(data);
  // zlib takes uInt lengths; feed in chunks so multi-GiB payloads stay correct.
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = static_cast<std::uint32_t>(::crc32(crc, p, chunk));
    p += chunk;
    len -= chunk;
  }
  return crc;
}

template <typename U>
inline void store_le(std::uint8_t* out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out[i] = static_cast<std::uint8_t>(value >> (8 * i));
  }
}

template <typename U>
inline U load_le(const std::uint8_t* in) {
  static_assert(std::is_unsigned_v<U>);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<U>(in[i]) << (8 * i));
  }
  return value;
}

inline void encode_f32(std::span<const float> values, std::uint8_t* out) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    store_le(out + 4 * i, std::bit_cast<std::uint32_t>(values[i]));
  }
}

inline void decode_f32(const std::uint8_t* in, std::span<float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(load_le<std::uint32_t>(in + 4 * i));
  }
}

/// Streams a format body to an ostream, tracking byte count and CRC.
class ByteWriter {
 public:
  ByteWriter(std::ostream& os, const Magic& magic) : os_(os) {
    os_.write(magic.data(), 4);
    bytes_ = 4;
    check();
  }

  void bytes(const void* data, std::size_t len) {
    crc_ = crc32_update(crc_, data, len);
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    bytes_ += len;
    check();
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

  void f32_array(std::span<const float> values) {
    scratch_.resize(values.size() * 4);
    encode_f32(values, scratch_.data());
    bytes(scratch_.data(), scratch_.size());
  }

  /// Appends the CRC trailer; returns the total byte count of the file.
  std::uint64_t finish() {
    std::uint8_t buf[4];
    store_le(buf, crc_);
    os_.write(reinterpret_cast<const char*>(buf), 4);
    bytes_ += 4;
    os_.flush();
    check();
    return bytes_;
  }

  std::uint64_t bytes_written() const { return bytes_; }

 private:
  template <typename U>
  void put(U v) {
    std::uint8_t buf[sizeof(U)];
    store_le(buf, v);
    bytes(buf, sizeof(U));
  }

  void check() {
    if (!os_) throw IoError("write failed");
  }

  std::ostream& os_;
  std::uint32_t crc_ = 0;
  std::uint64_t bytes_ = 0;
  std::vector<std::uint8_t> scratch_;
};

/// Cursor over an in-memory file image. Every read is bounds-checked.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  void expect_magic(const Magic& magic, std::string_view what) {
    need(4);
    if (std::memcmp(data_.data(), magic.data(), 4) != 0) {
      throw FormatError(std::string(what) + ": bad magic");
    }
    pos_ = 4;
  }

  /// Verifies the trailing CRC over bytes [4, size-4).
  void verify_crc(std::string_view what) const {
    if (data_.size() < 8) throw FormatError(std::string(what) + ": truncated file");
    const std::size_t body = data_.size() - 4;
    const std::uint32_t stored = load_le<std::uint32_t>(data_.data() + body);
    const std::uint32_t actual = crc32_update(0, data_.data() + 4, body - 4);
    if (stored != actual) throw FormatError(std::string(what) + ": CRC mismatch");
  }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated file");
  }

 private:
  template <typename U>
  U get() {
    need(sizeof(U));
    const U v = load_le<U>(data_.data() + pos_);
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace dynaprune::detail
