// Copyright 2026 The msvq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msvq/error.hpp"

namespace msvq::io {

using Bytes = std::vector<std::uint8_t>;

namespace detail {
template <typename T>
T byteswap(T v) {
  auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
  std::reverse(raw.begin(), raw.end());
  return std::bit_cast<T>(raw);
}
}  // namespace detail

// Little-endian append-only writer.
class Writer {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) v = detail::byteswap(v);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }

  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  const Bytes& bytes() const& { return bytes_; }
  Bytes bytes() && { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

// Bounds-checked reader; every short read is a CorruptContainer.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0)
      throw Error(ErrorKind::CorruptContainer, "bad magic, expected " + std::string(tag));
    pos_ += tag.size();
  }

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) v = detail::byteswap(v);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }
  void skip(std::size_t n) { need(n); pos_ += n; }

  void expect_end() const {
    if (remaining() != 0) throw Error(ErrorKind::CorruptContainer, "trailing bytes in container");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::CorruptContainer, "truncated container");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::string& path);
// Writes via a temporary sibling and rename.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::string& path, std::string_view text);

}  // namespace msvq::io
