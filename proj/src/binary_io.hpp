#pragma once

// Little-endian byte packing shared by the checkpoint and embedding formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "ega/error.hpp"

namespace ega::detail {

class ByteWriter {
 public:
  void raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int k = 0; k < width; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& buf) : buf_(buf) {}

  std::string raw(std::size_t n) {
    need(n);
    std::string out(buf_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
  double f64() { return std::bit_cast<double>(get(8)); }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    require(remaining() >= n, ErrorCode::truncated_payload, "file is truncated");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + k])) << (8 * k);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace ega::detail
