#pragma once
// Little-endian packing helpers for the binary file formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

#include "egohand/common.hpp"
#include "egohand/file_io.hpp"

namespace egohand::io {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void bytes(const char* data, std::size_t n) { out_.insert(out_.end(), data, data + n); }

  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    U u;
    std::memcpy(&u, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }

  void f32(float value) {
    std::uint32_t u;
    std::memcpy(&u, &value, sizeof u);
    le(u);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  bool has(std::size_t n) const { return remaining() >= n; }

  bool magic(const char (&tag)[5]) {
    if (!has(4) || std::memcmp(data_.data() + pos_, tag, 4) != 0) return false;
    pos_ += 4;
    return true;
  }

  // Caller checks has() first.
  template <typename T>
  T le() {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &u, sizeof(T));
    return value;
  }

  float f32() {
    const auto u = le<std::uint32_t>();
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace egohand::io
