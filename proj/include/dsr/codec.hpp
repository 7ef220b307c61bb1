#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "dsr/bitio.hpp"
#include "dsr/error.hpp"
#include "dsr/image.hpp"
#include "dsr/network.hpp"
#include "dsr/parallel.hpp"
#include "dsr/pocs.hpp"
#include "dsr/rangecoder.hpp"
#include "dsr/transform.hpp"

namespace dsr {

// Sign bits of the nonzero AC levels in canonical order: blocks row-major,
// zigzag within the block, DC excluded, zero levels excluded. 1 = negative.
struct SignField {
  std::vector<uint8_t> bits;

  size_t size() const { return bits.size(); }
  bool operator==(const SignField& o) const { return bits == o.bits; }
};

// XOR between true and restored signs, same canonical order as SignField.
struct ResidualField {
  std::vector<uint8_t> bits;

  size_t size() const { return bits.size(); }
};

using Bitstream = std::vector<uint8_t>;

inline constexpr uint8_t kVariantNone = 255;  // raw-sign (baseline) streams

// Splits a grid into sign bits over nonzero AC levels and the dequantized
// magnitude of every coefficient (DC included; POCS constrains it too).
inline std::pair<SignField, MagnitudeField> extract_signs(const CoeffGrid& grid,
                                                          const QuantTable& table) {
  SignField signs;
  for (int b = 0; b < grid.block_count(); ++b) {
    const int16_t* levels = grid.block(b);
    for (int pos = 1; pos < 64; ++pos) {
      const int16_t lvl = levels[kZigzag[pos]];
      if (lvl != 0) signs.bits.push_back(lvl < 0 ? 1 : 0);
    }
  }
  return {std::move(signs), magnitude_field(grid, table)};
}

inline size_t nonzero_ac_count(const CoeffGrid& grid) {
  size_t n = 0;
  for (int b = 0; b < grid.block_count(); ++b) {
    const int16_t* levels = grid.block(b);
    for (int pos = 1; pos < 64; ++pos) {
      if (levels[kZigzag[pos]] != 0) ++n;
    }
  }
  return n;
}

// Restores the signs from magnitudes alone: runs psi on the DC-only initial
// image and reads the sign of each restored DCT coefficient at the nonzero
// AC positions. sign(t >= 0) maps to bit 0. Depends only on |levels|, the
// signed DC, the table and the parameters, so encoder and decoder agree.
inline SignField retrieve_signs(const CoeffGrid& grid, const QuantTable& table,
                                const ModelParams& params) {
  validate_params(params);
  const MagnitudeField lam = magnitude_field(grid, table);
  const PaddedImage restored = psi_forward(initial_image(grid, table), params, lam);

  std::vector<CoeffBlock> coeffs(size_t(grid.block_count()));
  parallel_for(grid.block_count(), [&](int b) {
    const int bx = b % grid.blocks_x, by = b / grid.blocks_x;
    coeffs[size_t(b)] = dct2(detail::read_block(restored, bx, by));
  });

  SignField signs;
  for (int b = 0; b < grid.block_count(); ++b) {
    const int16_t* levels = grid.block(b);
    const CoeffBlock& t = coeffs[size_t(b)];
    for (int pos = 1; pos < 64; ++pos) {
      const int idx = kZigzag[pos];
      if (levels[idx] != 0) signs.bits.push_back(t[idx] < 0.0 ? 1 : 0);
    }
  }
  return signs;
}

inline ResidualField sign_residual(const SignField& truth, const SignField& restored) {
  if (truth.size() != restored.size()) {
    throw ShapeError("sign_residual: field lengths differ");
  }
  ResidualField r;
  r.bits.resize(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) r.bits[i] = truth.bits[i] ^ restored.bits[i];
  return r;
}

inline SignField apply_residual(const SignField& restored, const ResidualField& residual) {
  if (restored.size() != residual.size()) {
    throw ShapeError("apply_residual: field lengths differ");
  }
  SignField out;
  out.bits.resize(restored.size());
  for (size_t i = 0; i < restored.size(); ++i) out.bits[i] = restored.bits[i] ^ residual.bits[i];
  return out;
}

// ---------------------------------------------------------------------------
// Section coding

namespace detail {

// DC levels, DPCM across blocks in row-major order, signed Exp-Golomb.
inline std::vector<uint8_t> encode_dc_section(const CoeffGrid& grid) {
  BitWriter bw;
  int prev = 0;
  for (int b = 0; b < grid.block_count(); ++b) {
    const int dc = grid.block(b)[0];
    bw.put_se(int32_t(dc - prev));
    prev = dc;
  }
  return bw.finish();
}

inline void decode_dc_section(const std::vector<uint8_t>& bytes, CoeffGrid& grid) {
  BitReader br(bytes);
  int prev = 0;
  for (int b = 0; b < grid.block_count(); ++b) {
    prev += br.get_se();
    if (prev > 32767 || prev < -32767) throw FormatError("DC level out of range");
    grid.block(b)[0] = int16_t(prev);
  }
}

// AC magnitudes as zigzag (run, |level|-1) pairs in unsigned Exp-Golomb. A
// run can never reach 63 before a nonzero level, so ue(63) marks end of
// block.
inline constexpr uint32_t kEndOfBlock = 63;

inline std::vector<uint8_t> encode_ac_section(const CoeffGrid& grid) {
  BitWriter bw;
  for (int b = 0; b < grid.block_count(); ++b) {
    const int16_t* levels = grid.block(b);
    uint32_t run = 0;
    for (int pos = 1; pos < 64; ++pos) {
      const int lvl = levels[kZigzag[pos]];
      if (lvl == 0) {
        ++run;
      } else {
        bw.put_ue(run);
        bw.put_ue(uint32_t(std::abs(lvl)) - 1);
        run = 0;
      }
    }
    bw.put_ue(kEndOfBlock);
  }
  return bw.finish();
}

// Fills |level| magnitudes (positive placeholders; signs applied later).
inline void decode_ac_section(const std::vector<uint8_t>& bytes, CoeffGrid& grid) {
  BitReader br(bytes);
  for (int b = 0; b < grid.block_count(); ++b) {
    int16_t* levels = grid.block(b);
    int pos = 1;
    for (;;) {
      const uint32_t run = br.get_ue();
      if (run == kEndOfBlock) break;
      pos += int(run);
      if (pos > 63) throw FormatError("AC run overruns block");
      const uint32_t mag = br.get_ue() + 1;
      if (mag > 32767) throw FormatError("AC magnitude out of range");
      levels[kZigzag[pos]] = int16_t(mag);
      ++pos;
    }
  }
}

inline void put_u32(Bitstream& out, uint32_t v) {
  out.push_back(uint8_t(v & 0xFF));
  out.push_back(uint8_t((v >> 8) & 0xFF));
  out.push_back(uint8_t((v >> 16) & 0xFF));
  out.push_back(uint8_t((v >> 24) & 0xFF));
}

inline uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

inline void put_section(Bitstream& out, const std::vector<uint8_t>& payload) {
  put_u32(out, uint32_t(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
}

}  // namespace detail

// Parsed DSR1 container.
struct StreamInfo {
  uint8_t variant = kVariantNone;
  int recursion_depth = 0;
  int qf = 0;
  int original_width = 0;
  int original_height = 0;
  std::vector<uint8_t> dc_section;
  std::vector<uint8_t> ac_section;
  std::vector<uint8_t> sign_section;  // range-coded residual, or raw sign bits

  int blocks_x() const {
    return (original_width + kBlockSize - 1) / kBlockSize;
  }
  int blocks_y() const {
    return (original_height + kBlockSize - 1) / kBlockSize;
  }
};

// DSR1 layout, little-endian: "DSR1" | version u8 = 1 | variant u8
// (0 PDSR, 1 RDSR, 2 FDSR, 255 none) | K u8 | qf u8 | orig_width u32 |
// orig_height u32 | three sections, each `length u32 | payload`:
// DC stream, AC magnitude stream, residual/raw-sign stream.
inline StreamInfo parse_stream(const Bitstream& bytes) {
  constexpr size_t kHeader = 4 + 1 + 1 + 1 + 1 + 4 + 4;
  if (bytes.size() < kHeader) throw FormatError("stream shorter than DSR1 header");
  if (std::memcmp(bytes.data(), "DSR1", 4) != 0) throw FormatError("bad DSR1 magic");
  if (bytes[4] != 1) throw FormatError("unsupported DSR1 version");
  StreamInfo info;
  info.variant = bytes[5];
  if (info.variant > 2 && info.variant != kVariantNone) {
    throw FormatError("bad variant byte");
  }
  info.recursion_depth = bytes[6];
  info.qf = bytes[7];
  if (info.qf < 1 || info.qf > 100) throw FormatError("quality factor out of range");
  info.original_width = int(detail::get_u32(bytes.data() + 8));
  info.original_height = int(detail::get_u32(bytes.data() + 12));
  if (info.original_width < 1 || info.original_height < 1) {
    throw FormatError("bad image dimensions");
  }

  size_t off = kHeader;
  for (std::vector<uint8_t>* section :
       {&info.dc_section, &info.ac_section, &info.sign_section}) {
    if (bytes.size() - off < 4) throw FormatError("missing section length");
    const uint32_t len = detail::get_u32(bytes.data() + off);
    off += 4;
    if (bytes.size() - off < len) throw FormatError("section length exceeds stream");
    section->assign(bytes.begin() + long(off), bytes.begin() + long(off + len));
    off += len;
  }
  if (off != bytes.size()) throw FormatError("trailing bytes after last section");
  return info;
}

// Baseline reconstruction of a level grid: dequantize, inverse DCT, crop.
inline Image baseline_image(const CoeffGrid& grid, const QuantTable& table,
                            int original_width, int original_height) {
  return crop_to_original(
      reconstruct_grid(grid, table, original_width, original_height));
}

// Full encoder pipeline. With retrieval, the sign section carries the
// range-coded XOR residual against the restored signs; with `no_retrieval`
// it carries the raw sign bits (variant byte 255).
inline Bitstream encode(const Image& image, int qf, const ModelParams* params,
                        bool no_retrieval = false) {
  if (qf < 1 || qf > 100) throw ConfigError("quality factor must be in [1, 100]");
  if (!no_retrieval) {
    if (!params) throw ConfigError("encode: checkpoint required unless retrieval is disabled");
    validate_params(*params);
  }
  const PaddedImage padded = pad_to_blocks(image);
  const QuantTable table = scale_quant_table(base_quant_table(), qf);
  const CoeffGrid grid = forward_grid(padded, table);

  SignField truth = extract_signs(grid, table).first;
  std::vector<uint8_t> sign_payload;
  if (no_retrieval) {
    BitWriter bw;
    for (uint8_t b : truth.bits) bw.put_bit(b);
    sign_payload = bw.finish();
  } else {
    const SignField restored = retrieve_signs(grid, table, *params);
    sign_payload = rc_encode_bits(sign_residual(truth, restored).bits);
  }

  Bitstream out;
  out.insert(out.end(), {'D', 'S', 'R', '1'});
  out.push_back(1);
  out.push_back(no_retrieval ? kVariantNone : uint8_t(params->variant));
  out.push_back(no_retrieval ? 0 : uint8_t(params->recursion_depth));
  out.push_back(uint8_t(qf));
  detail::put_u32(out, uint32_t(image.width));
  detail::put_u32(out, uint32_t(image.height));
  detail::put_section(out, detail::encode_dc_section(grid));
  detail::put_section(out, detail::encode_ac_section(grid));
  detail::put_section(out, sign_payload);
  return out;
}

// Decodes the level grid of a stream: magnitudes from the sections, AC signs
// re-derived by the same retrieval as the encoder and corrected by the
// residual (or read raw for variant-255 streams).
inline CoeffGrid decode_grid(const StreamInfo& info, const ModelParams* params) {
  const QuantTable table = scale_quant_table(base_quant_table(), info.qf);
  CoeffGrid grid(info.blocks_x(), info.blocks_y());
  detail::decode_dc_section(info.dc_section, grid);
  detail::decode_ac_section(info.ac_section, grid);
  const size_t n_signs = nonzero_ac_count(grid);

  SignField signs;
  if (info.variant == kVariantNone) {
    BitReader br(info.sign_section);
    signs.bits.reserve(n_signs);
    for (size_t i = 0; i < n_signs; ++i) signs.bits.push_back(uint8_t(br.get_bit()));
  } else {
    if (!params) {
      throw ConfigError("decode: stream requires a model checkpoint");
    }
    if (uint8_t(params->variant) != info.variant ||
        params->recursion_depth != info.recursion_depth) {
      throw ConfigError("decode: checkpoint does not match stream header");
    }
    const SignField restored = retrieve_signs(grid, table, *params);
    ResidualField residual;
    residual.bits = rc_decode_bits(info.sign_section, n_signs);
    signs = apply_residual(restored, residual);
  }

  size_t bit = 0;
  for (int b = 0; b < grid.block_count(); ++b) {
    int16_t* levels = grid.block(b);
    for (int pos = 1; pos < 64; ++pos) {
      const int idx = kZigzag[pos];
      if (levels[idx] != 0 && signs.bits[bit++]) levels[idx] = int16_t(-levels[idx]);
    }
  }
  return grid;
}

inline Image decode(const Bitstream& bytes, const ModelParams* params = nullptr) {
  const StreamInfo info = parse_stream(bytes);
  const CoeffGrid grid = decode_grid(info, params);
  const QuantTable table = scale_quant_table(base_quant_table(), info.qf);
  return baseline_image(grid, table, info.original_width, info.original_height);
}

}  // namespace dsr
