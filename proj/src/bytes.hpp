#pragma once

// Little-endian byte packing shared by the binary formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssc/error.hpp"

namespace ssc::bytes {

class Writer {
 public:
  explicit Writer(std::size_t reserve = 0) { buf_.reserve(reserve); }

  template <class T>
  void put(T v) {
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      put(std::bit_cast<U>(v));
    } else {
      using U = std::make_unsigned_t<T>;
      auto u = static_cast<U>(v);
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf_.push_back(static_cast<std::byte>(u & 0xff));
        if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
      }
    }
  }
  void put_magic(std::string_view magic) {
    for (char c : magic) buf_.push_back(static_cast<std::byte>(c));
  }
  std::vector<std::byte> take() { return std::move(buf_); }

 private:
  std::vector<std::byte> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> data) : data_(data) {}

  template <class T>
  T get() {
    need(sizeof(T));
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      return std::bit_cast<T>(get<U>());
    } else {
      using U = std::make_unsigned_t<T>;
      U u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        u = static_cast<U>(u | (static_cast<U>(std::to_integer<std::uint8_t>(data_[pos_ + i])) << (8 * i)));
      }
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }
  bool has_magic(std::string_view magic) const {
    if (data_.size() < magic.size()) return false;
    for (std::size_t i = 0; i < magic.size(); ++i) {
      if (static_cast<char>(data_[i]) != magic[i]) return false;
    }
    return true;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::span<const std::byte> rest() const { return data_.subspan(pos_); }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError("unexpected end of data", pos_);
  }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

}  // namespace ssc::bytes
