#pragma once

#include <cstdint>
#include <vector>

#include "dsr/error.hpp"

namespace dsr {

// MSB-first bit writer over a growable byte buffer.
class BitWriter {
 public:
  void put_bit(int bit) {
    acc_ = (acc_ << 1) | uint32_t(bit & 1);
    if (++nbits_ == 8) {
      bytes_.push_back(uint8_t(acc_));
      acc_ = 0;
      nbits_ = 0;
    }
  }

  void put_bits(uint32_t value, int n) {
    for (int i = n - 1; i >= 0; --i) put_bit(int(value >> i) & 1);
  }

  // Exp-Golomb code of an unsigned value: n-1 zero bits, then the n bits of
  // value+1, where n is the bit length of value+1.
  void put_ue(uint32_t v) {
    const uint64_t code = uint64_t(v) + 1;
    int n = 0;
    while ((code >> n) != 0) ++n;
    for (int i = 0; i < n - 1; ++i) put_bit(0);
    for (int i = n - 1; i >= 0; --i) put_bit(int(code >> i) & 1);
  }

  // Signed mapping: v>0 -> 2v-1, v<=0 -> -2v.
  void put_se(int32_t v) {
    put_ue(v > 0 ? uint32_t(2 * int64_t(v) - 1) : uint32_t(-2 * int64_t(v)));
  }

  // Pads the last byte with zero bits.
  std::vector<uint8_t> finish() {
    if (nbits_ > 0) {
      bytes_.push_back(uint8_t(acc_ << (8 - nbits_)));
      acc_ = 0;
      nbits_ = 0;
    }
    return std::move(bytes_);
  }

  size_t bit_count() const { return bytes_.size() * 8 + size_t(nbits_); }

 private:
  std::vector<uint8_t> bytes_;
  uint32_t acc_ = 0;
  int nbits_ = 0;
};

class BitReader {
 public:
  BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit BitReader(const std::vector<uint8_t>& bytes)
      : BitReader(bytes.data(), bytes.size()) {}

  int get_bit() {
    const size_t byte = pos_ >> 3;
    if (byte >= size_) throw IoError("bit stream underrun");
    const int bit = (data_[byte] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return bit;
  }

  uint32_t get_bits(int n) {
    uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | uint32_t(get_bit());
    return v;
  }

  uint32_t get_ue() {
    int zeros = 0;
    while (get_bit() == 0) {
      if (++zeros > 31) throw FormatError("corrupt exp-golomb code");
    }
    uint64_t code = 1;
    for (int i = 0; i < zeros; ++i) code = (code << 1) | uint64_t(get_bit());
    return uint32_t(code - 1);
  }

  int32_t get_se() {
    const uint32_t k = get_ue();
    return (k & 1) ? int32_t((k + 1) / 2) : -int32_t(k / 2);
  }

  size_t bits_consumed() const { return pos_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

}  // namespace dsr
