#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synchro/frame_codec.hpp"

namespace synchro::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void u24(std::uint32_t v) {
    u8(static_cast<std::uint8_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  // Fixed-width, space padded.
  void text(std::string_view s, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) {
      u8(i < s.size() ? static_cast<std::uint8_t>(s[i]) : ' ');
    }
  }
  void raw(std::string_view s) {
    for (char c : s) u8(static_cast<std::uint8_t>(c));
  }

  void patch_u16(std::size_t at, std::uint16_t v) {
    buf_[at] = static_cast<std::uint8_t>(v >> 8);
    buf_[at + 1] = static_cast<std::uint8_t>(v);
  }

  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, std::size_t pos = 0)
      : bytes_(bytes), pos_(pos) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::uint32_t u24() {
    need(3);
    std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 16) |
                      (std::uint32_t{bytes_[pos_ + 1]} << 8) | bytes_[pos_ + 2];
    pos_ += 3;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  float f32() { return std::bit_cast<float>(u32()); }
  // Fixed-width field; trailing spaces and NULs are stripped.
  std::string text(std::size_t width) {
    need(width);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), width);
    pos_ += width;
    auto end = s.find_last_not_of(std::string_view(" \0", 2));
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
  }
  std::string rest_text(std::size_t end) {
    std::string s;
    if (end > pos_) {
      s.assign(reinterpret_cast<const char*>(bytes_.data() + pos_), end - pos_);
      pos_ = end;
    }
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw CodecError(CodecErrc::SizeMismatch, pos_,
                       "frame ends before field at offset " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace synchro::detail
