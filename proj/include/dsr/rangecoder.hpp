#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "dsr/error.hpp"

namespace dsr {

// Adaptive binary probability model: symbol counts starting at c0 = c1 = 1,
// incremented after each coded bit, both halved (min 1) when the total
// reaches 65536.
struct BinaryModel {
  uint32_t c0 = 1;
  uint32_t c1 = 1;

  void update(int bit) {
    if (bit) ++c1; else ++c0;
    if (c0 + c1 >= 65536) {
      c0 = std::max(1u, c0 >> 1);
      c1 = std::max(1u, c1 >> 1);
    }
  }
};

// Binary range coder with 32-bit low/range and byte-wise renormalization
// (carry handled through a cache of pending 0xFF bytes).
class RangeEncoder {
 public:
  void encode(int bit, BinaryModel& m) {
    const uint32_t total = m.c0 + m.c1;
    const uint32_t r0 = uint32_t(uint64_t(range_) * m.c0 / total);
    if (bit) {
      low_ += r0;
      range_ -= r0;
    } else {
      range_ = r0;
    }
    m.update(bit);
    while (range_ < kTop) {
      shift_low();
      range_ <<= 8;
    }
  }

  std::vector<uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
  }

 private:
  static constexpr uint32_t kTop = 1u << 24;

  void shift_low() {
    if (uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const uint8_t carry = uint8_t(low_ >> 32);
      uint8_t b = cache_;
      do {
        out_.push_back(uint8_t(b + carry));
        b = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = uint8_t(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ << 8) & 0xFFFFFFFFull;
  }

  std::vector<uint8_t> out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
    for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
  }
  explicit RangeDecoder(const std::vector<uint8_t>& bytes)
      : RangeDecoder(bytes.data(), bytes.size()) {}

  int decode(BinaryModel& m) {
    const uint32_t total = m.c0 + m.c1;
    const uint32_t r0 = uint32_t(uint64_t(range_) * m.c0 / total);
    int bit;
    if (code_ < r0) {
      bit = 0;
      range_ = r0;
    } else {
      bit = 1;
      code_ -= r0;
      range_ -= r0;
    }
    m.update(bit);
    while (range_ < kTop) {
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
    }
    return bit;
  }

 private:
  static constexpr uint32_t kTop = 1u << 24;

  uint32_t next_byte() {
    if (pos_ >= size_) throw IoError("truncated range-coded stream");
    return data_[pos_++];
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

// Codes a bit vector with a single adaptive context. An empty vector codes to
// an empty byte sequence.
inline std::vector<uint8_t> rc_encode_bits(const std::vector<uint8_t>& bits) {
  if (bits.empty()) return {};
  RangeEncoder enc;
  BinaryModel model;
  for (uint8_t b : bits) enc.encode(b & 1, model);
  return enc.finish();
}

inline std::vector<uint8_t> rc_decode_bits(const std::vector<uint8_t>& bytes,
                                           size_t count) {
  std::vector<uint8_t> bits;
  if (count == 0) return bits;
  RangeDecoder dec(bytes);
  BinaryModel model;
  bits.reserve(count);
  for (size_t i = 0; i < count; ++i) bits.push_back(uint8_t(dec.decode(model)));
  return bits;
}

}  // namespace dsr
