#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pla/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace pla::io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path);
}

/// Append-only little-endian encoder.
class Writer {
 public:
  void magic(std::string_view m) { buf_.append(m); }
  void u8(std::uint8_t v) { pod(v); }
  void u32(std::uint32_t v) { pod(v); }
  void i32(std::int32_t v) { pod(v); }
  void f32(float v) { pod(v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void f32s(std::span<const float> v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  const std::string& bytes() const { return buf_; }

 private:
  template <class T>
  void pod(T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf_.append(tmp, sizeof(T));
  }
  std::string buf_;
};

/// Bounds-checked little-endian decoder. Every failure names the byte offset.
class Reader {
 public:
  Reader(std::string_view data, std::string source)
      : data_(data), source_(std::move(source)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (data_.substr(pos_, m.size()) != m)
      fail("bad magic (expected \"" + std::string(m) + "\")");
    pos_ += m.size();
  }
  void expect_version(std::uint32_t want) {
    const std::size_t at = pos_;
    const auto v = u32();
    if (v != want) {
      pos_ = at;
      fail("unsupported version " + std::to_string(v));
    }
  }
  std::uint8_t u8() { return pod<std::uint8_t>("u8"); }
  std::uint32_t u32() { return pod<std::uint32_t>("u32"); }
  std::int32_t i32() { return pod<std::int32_t>("i32"); }
  float f32() { return pod<float>("f32"); }
  std::string str() {
    const auto n = u32();
    need(n, "string body");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void f32s(std::span<float> out) {
    need(out.size_bytes(), "f32 block");
    std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw InputError(source_ + ": " + what + " at byte offset " +
                     std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) fail(std::string("truncated ") + what);
  }
  template <class T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace pla::io
