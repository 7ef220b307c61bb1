#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/image.hpp"

namespace dsr {

using Block = std::array<double, 64>;       // 8x8 spatial samples, row-major
using CoeffBlock = std::array<double, 64>;  // 8x8 DCT coefficients, [wv*8+wu]

namespace detail {

// Orthonormal DCT-II basis rows: basis[w][u] = a(w) cos((u+1/2) w pi / 8)
// with a(0) = sqrt(1/8) and a(w>0) = sqrt(2/8).
inline const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const std::array<std::array<double, 8>, 8> basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    const double pi = std::acos(-1.0);
    for (int w = 0; w < 8; ++w) {
      const double a = w == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int u = 0; u < 8; ++u) {
        b[w][u] = a * std::cos((u + 0.5) * w * pi / 8.0);
      }
    }
    return b;
  }();
  return basis;
}

}  // namespace detail

// Separable orthonormal 2D DCT-II of one 8x8 block. Energy-preserving:
// sum of squares is identical in both domains.
inline CoeffBlock dct2(const Block& block) {
  const auto& b = detail::dct_basis();
  std::array<double, 64> tmp;  // rows transformed: tmp[v][wu]
  for (int v = 0; v < 8; ++v) {
    for (int wu = 0; wu < 8; ++wu) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += b[wu][u] * block[v * 8 + u];
      tmp[v * 8 + wu] = acc;
    }
  }
  CoeffBlock out;
  for (int wv = 0; wv < 8; ++wv) {
    for (int wu = 0; wu < 8; ++wu) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += b[wv][v] * tmp[v * 8 + wu];
      out[wv * 8 + wu] = acc;
    }
  }
  return out;
}

// Exact inverse of dct2 (the transpose of the orthonormal map).
inline Block idct2(const CoeffBlock& coeffs) {
  const auto& b = detail::dct_basis();
  std::array<double, 64> tmp;  // columns inverted: tmp[v][wu]
  for (int v = 0; v < 8; ++v) {
    for (int wu = 0; wu < 8; ++wu) {
      double acc = 0.0;
      for (int wv = 0; wv < 8; ++wv) acc += b[wv][v] * coeffs[wv * 8 + wu];
      tmp[v * 8 + wu] = acc;
    }
  }
  Block out;
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int wu = 0; wu < 8; ++wu) acc += b[wu][u] * tmp[v * 8 + wu];
      out[v * 8 + u] = acc;
    }
  }
  return out;
}

// Quantization steps on the JPEG integer scale; real steps in the internal
// sample domain are entry/128 (the same 1/128 rescaling as the pixels).
struct QuantTable {
  std::array<int, 64> entries{};  // row-major [wv*8+wu], each in [1, 255]

  double step(int index) const { return entries[index] / 128.0; }
};

// The JPEG Annex K luminance table; also the training/eval table here.
inline const QuantTable& base_quant_table() {
  static const QuantTable t{{
      16, 11, 10, 16, 24,  40,  51,  61,   //
      12, 12, 14, 19, 26,  58,  60,  55,   //
      14, 13, 16, 24, 40,  57,  69,  56,   //
      14, 17, 22, 29, 51,  87,  80,  62,   //
      18, 22, 37, 56, 68,  109, 103, 77,   //
      24, 35, 55, 64, 81,  104, 113, 92,   //
      49, 64, 78, 87, 103, 121, 120, 101,  //
      72, 92, 95, 98, 112, 100, 103, 99,   //
  }};
  return t;
}

// IJG quality-factor scaling: s = qf<50 ? 5000/qf : 200-2*qf, entry' =
// clamp(floor((entry*s + 50)/100), 1, 255). qf=50 leaves the table unchanged.
inline QuantTable scale_quant_table(const QuantTable& base, int qf) {
  if (qf < 1 || qf > 100) {
    throw ConfigError("quality factor must be in [1, 100]");
  }
  const int s = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  QuantTable out;
  for (int i = 0; i < 64; ++i) {
    const int v = (base.entries[i] * s + 50) / 100;
    out.entries[i] = v < 1 ? 1 : (v > 255 ? 255 : v);
  }
  return out;
}

using LevelBlock = std::array<int16_t, 64>;

// Rounds half away from zero, so the quantizer is symmetric in sign.
inline LevelBlock quantize(const CoeffBlock& coeffs, const QuantTable& table) {
  LevelBlock out;
  for (int i = 0; i < 64; ++i) {
    const long long level = std::llround(coeffs[i] / table.step(i));
    if (level > 32767 || level < -32767) {
      throw NumericError("quantized level overflows 16-bit range");
    }
    out[i] = static_cast<int16_t>(level);
  }
  return out;
}

inline CoeffBlock dequantize(const LevelBlock& levels, const QuantTable& table) {
  CoeffBlock out;
  for (int i = 0; i < 64; ++i) out[i] = levels[i] * table.step(i);
  return out;
}

// Per-block quantized DCT levels covering a padded image. Blocks are stored
// row-major; within a block, [wv*8+wu].
struct CoeffGrid {
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<int16_t> levels;  // blocks_x * blocks_y * 64

  CoeffGrid() = default;
  CoeffGrid(int bx, int by)
      : blocks_x(bx), blocks_y(by), levels(size_t(bx) * by * 64, 0) {}

  int block_count() const { return blocks_x * blocks_y; }
  int16_t* block(int index) { return levels.data() + size_t(index) * 64; }
  const int16_t* block(int index) const { return levels.data() + size_t(index) * 64; }
  int width() const { return blocks_x * kBlockSize; }
  int height() const { return blocks_y * kBlockSize; }
};

// Non-overlapping row-major 8x8 tiling of a padded image.
inline std::vector<Block> split_blocks(const PaddedImage& img) {
  if (img.width % kBlockSize != 0 || img.height % kBlockSize != 0) {
    throw ShapeError("split_blocks: dimensions not block-aligned");
  }
  const int bx = img.blocks_x(), by = img.blocks_y();
  std::vector<Block> blocks(size_t(bx) * by);
  for (int j = 0; j < by; ++j) {
    for (int i = 0; i < bx; ++i) {
      Block& blk = blocks[size_t(j) * bx + i];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          blk[y * 8 + x] = img.at(i * 8 + x, j * 8 + y);
    }
  }
  return blocks;
}

inline PaddedImage merge_blocks(const std::vector<Block>& blocks, int width,
                                int height, int original_width = 0,
                                int original_height = 0) {
  if (width % kBlockSize != 0 || height % kBlockSize != 0) {
    throw ShapeError("merge_blocks: dimensions not block-aligned");
  }
  const int bx = width / kBlockSize, by = height / kBlockSize;
  if (blocks.size() != size_t(bx) * by) {
    throw ShapeError("merge_blocks: block count does not match dimensions");
  }
  PaddedImage img(width, height, original_width ? original_width : width,
                  original_height ? original_height : height);
  for (int j = 0; j < by; ++j) {
    for (int i = 0; i < bx; ++i) {
      const Block& blk = blocks[size_t(j) * bx + i];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          img.at(i * 8 + x, j * 8 + y) = blk[y * 8 + x];
    }
  }
  return img;
}

// Blockwise DCT + quantization of a whole padded image.
inline CoeffGrid forward_grid(const PaddedImage& img, const QuantTable& table) {
  CoeffGrid grid(img.blocks_x(), img.blocks_y());
  const std::vector<Block> blocks = split_blocks(img);
  for (int b = 0; b < grid.block_count(); ++b) {
    const LevelBlock levels = quantize(dct2(blocks[b]), table);
    int16_t* dst = grid.block(b);
    for (int i = 0; i < 64; ++i) dst[i] = levels[i];
  }
  return grid;
}

// Dequantize + inverse DCT of a whole grid.
inline PaddedImage reconstruct_grid(const CoeffGrid& grid, const QuantTable& table,
                                    int original_width = 0, int original_height = 0) {
  std::vector<Block> blocks(size_t(grid.block_count()));
  for (int b = 0; b < grid.block_count(); ++b) {
    LevelBlock levels;
    const int16_t* src = grid.block(b);
    for (int i = 0; i < 64; ++i) levels[i] = src[i];
    blocks[size_t(b)] = idct2(dequantize(levels, table));
  }
  return merge_blocks(blocks, grid.width(), grid.height(), original_width,
                      original_height);
}

// DC-only reconstruction: dequantized DC per block, AC zeroed, inverse DCT.
// Every block comes out constant (the lone DC coefficient spreads as DC/8).
inline PaddedImage initial_image(const CoeffGrid& grid, const QuantTable& table) {
  PaddedImage out(grid.width(), grid.height(), grid.width(), grid.height());
  const double dc_scale = table.step(0) / 8.0;
  for (int by = 0; by < grid.blocks_y; ++by) {
    for (int bx = 0; bx < grid.blocks_x; ++bx) {
      const double v = grid.block(by * grid.blocks_x + bx)[0] * dc_scale;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) out.at(bx * 8 + x, by * 8 + y) = v;
    }
  }
  return out;
}

// Standard JPEG zigzag scan: kZigzag[pos] is the row-major block index of
// scan position pos; position 0 is DC.
inline constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
};

}  // namespace dsr
