#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/image.hpp"
#include "dsr/parallel.hpp"
#include "dsr/transform.hpp"

namespace dsr {

// Per-coefficient magnitude thresholds in the internal (dequantized) scale:
// lambda = |level| * step. Same block layout as CoeffGrid.
struct MagnitudeField {
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<double> lambda;  // blocks_x * blocks_y * 64, all >= 0

  MagnitudeField() = default;
  MagnitudeField(int bx, int by)
      : blocks_x(bx), blocks_y(by), lambda(size_t(bx) * by * 64, 0.0) {}

  int block_count() const { return blocks_x * blocks_y; }
  double* block(int index) { return lambda.data() + size_t(index) * 64; }
  const double* block(int index) const { return lambda.data() + size_t(index) * 64; }
};

// Support of the projection's sub-gradient: 1 where the DCT coefficient of
// the input passed through unclamped (|t| <= lambda), 0 where it was clamped.
struct ProjectionTape {
  int blocks_x = 0;
  int blocks_y = 0;
  std::vector<uint8_t> pass;

  ProjectionTape() = default;
  ProjectionTape(int bx, int by)
      : blocks_x(bx), blocks_y(by), pass(size_t(bx) * by * 64, 0) {}

  bool empty() const { return pass.empty(); }
};

inline MagnitudeField magnitude_field(const CoeffGrid& grid, const QuantTable& table) {
  MagnitudeField field(grid.blocks_x, grid.blocks_y);
  for (int b = 0; b < grid.block_count(); ++b) {
    const int16_t* levels = grid.block(b);
    double* lam = field.block(b);
    for (int i = 0; i < 64; ++i) lam[i] = std::abs(int(levels[i])) * table.step(i);
  }
  return field;
}

namespace detail {

inline void check_pocs_shapes(const PaddedImage& img, const MagnitudeField& lam) {
  if (img.blocks_x() != lam.blocks_x || img.blocks_y() != lam.blocks_y) {
    throw ShapeError("projection: image and magnitude field shapes differ");
  }
}

inline Block read_block(const PaddedImage& img, int bx, int by) {
  Block blk;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) blk[y * 8 + x] = img.at(bx * 8 + x, by * 8 + y);
  return blk;
}

inline void write_block(PaddedImage& img, int bx, int by, const Block& blk) {
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(bx * 8 + x, by * 8 + y) = blk[y * 8 + x];
}

}  // namespace detail

// Closest point of z in {x : |dct2(x)| <= lambda, per block and coefficient}.
// By orthonormality the minimization separates in the DCT domain, where it is
// the clamp of each coefficient to [-lambda, +lambda].
inline PaddedImage project(const PaddedImage& z, const MagnitudeField& lam,
                           ProjectionTape* tape = nullptr) {
  detail::check_pocs_shapes(z, lam);
  PaddedImage out(z.width, z.height, z.original_width, z.original_height);
  if (tape) *tape = ProjectionTape(lam.blocks_x, lam.blocks_y);

  parallel_for(lam.block_count(), [&](int b) {
    const int bx = b % lam.blocks_x, by = b / lam.blocks_x;
    CoeffBlock t = dct2(detail::read_block(z, bx, by));
    const double* bound = lam.block(b);
    uint8_t* pass = tape ? tape->pass.data() + size_t(b) * 64 : nullptr;
    for (int i = 0; i < 64; ++i) {
      const bool inside = std::fabs(t[i]) <= bound[i];
      if (pass) pass[i] = inside ? 1 : 0;
      if (!inside) t[i] = t[i] > 0.0 ? bound[i] : -bound[i];
    }
    detail::write_block(out, bx, by, idct2(t));
  });
  return out;
}

// Adjoint of the projection's sub-gradient: grad_in = idct2(mask * dct2(grad_out))
// per block. The mask is 1 on pass-through coefficients and 0 on clamped ones;
// the exact kink |t| = lambda counts as pass-through.
inline PaddedImage project_backward(const PaddedImage& grad_out,
                                    const ProjectionTape& tape) {
  if (grad_out.blocks_x() != tape.blocks_x || grad_out.blocks_y() != tape.blocks_y) {
    throw ShapeError("project_backward: gradient and tape shapes differ");
  }
  PaddedImage out(grad_out.width, grad_out.height, grad_out.original_width,
                  grad_out.original_height);
  parallel_for(tape.blocks_x * tape.blocks_y, [&](int b) {
    const int bx = b % tape.blocks_x, by = b / tape.blocks_x;
    CoeffBlock g = dct2(detail::read_block(grad_out, bx, by));
    const uint8_t* pass = tape.pass.data() + size_t(b) * 64;
    for (int i = 0; i < 64; ++i) {
      if (!pass[i]) g[i] = 0.0;
    }
    detail::write_block(out, bx, by, idct2(g));
  });
  return out;
}

// Largest constraint violation max(|dct2(x)| - lambda) over all coefficients;
// <= 0 means feasible.
inline double constraint_violation(const PaddedImage& x, const MagnitudeField& lam) {
  detail::check_pocs_shapes(x, lam);
  double worst = -1e300;
  for (int b = 0; b < lam.block_count(); ++b) {
    const int bx = b % lam.blocks_x, by = b / lam.blocks_x;
    const CoeffBlock t = dct2(detail::read_block(x, bx, by));
    const double* bound = lam.block(b);
    for (int i = 0; i < 64; ++i) {
      const double v = std::fabs(t[i]) - bound[i];
      if (v > worst) worst = v;
    }
  }
  return worst;
}

}  // namespace dsr
