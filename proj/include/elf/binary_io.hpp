// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "elf/error.hpp"

namespace elf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked reader; every failure reports the offset where it happened.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view tag) {
    const std::uint64_t at = pos_;
    need(tag.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
      throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", at);
    }
    pos_ += tag.size();
  }

  std::uint32_t u32(const char* what) { return pod<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return pod<std::uint64_t>(what); }
  float f32(const char* what) { return pod<float>(what); }
  double f64(const char* what) { return pod<double>(what); }

  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void expect_end() const {
    if (!at_end()) throw FormatError("trailing bytes after payload", pos_);
  }

 private:
  template <typename T>
  T pod(const char* what) {
    T v;
    raw(&v, sizeof v, what);
    return v;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace elf::io
