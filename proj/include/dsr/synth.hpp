#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dsr/image.hpp"
#include "dsr/rng.hpp"

namespace dsr {

namespace detail {

// 0 -> 1 over d in [-w, w], cubic smoothstep.
inline double soft_edge(double d, double w) {
  if (d <= -w) return 0.0;
  if (d >= w) return 1.0;
  const double t = (d + w) / (2.0 * w);
  return t * t * (3.0 - 2.0 * t);
}

inline void box_blur3(std::vector<double>& v, int w, int h) {
  std::vector<double> tmp(v.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          acc += v[size_t(sy) * w + sx];
        }
      }
      tmp[size_t(y) * w + x] = acc / 9.0;
    }
  }
  v.swap(tmp);
}

}  // namespace detail

// Knobs for the procedural scene generator; ranges are sampled per image.
struct SynthParams {
  double wave_amp_lo = 0.02, wave_amp_hi = 0.06;      // low-frequency background
  int shapes_lo = 7, shapes_hi = 16;                  // soft-edged regions
  double shape_size_lo = 0.04, shape_size_hi = 0.30;  // fraction of min(w, h)
  double edge_lo = 2.0, edge_hi = 5.0;                // edge softness, pixels
  double texture_amp_lo = 0.04, texture_amp_hi = 0.11;
  double grating_density_lo = 0.6, grating_density_hi = 1.2;  // per 1000 px^2
  double grating_amp_lo = 0.10, grating_amp_hi = 0.40;
  double grating_radius_lo = 6.0, grating_radius_hi = 16.0;
};

// Seeded procedural grayscale scene: low-frequency background waves,
// soft-edged rough-contoured shapes, blurred texture, and small
// cosine-patterned stamps whose phases carry no spatial context (stand-ins
// for fabric/foliage micro-detail). Output is quantized to the 8-bit grid
// like a loaded PGM.
inline Image make_synthetic_image(uint64_t seed, int width, int height,
                                  const SynthParams& sp = {}) {
  Rng rng(seed);
  Image img(width, height);
  const double dim = double(std::min(width, height));

  // Background: low-frequency waves over a constant base, plus a couple of
  // weaker mid-frequency ones.
  const double base = rng.uniform(-0.35, 0.35);
  struct Wave {
    double fx, fy, phase, amp;
  };
  Wave waves[5];
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int i = 0; i < 5; ++i) {
    Wave& wv = waves[i];
    const double cycles = i < 3 ? rng.uniform(0.3, 1.5) : rng.uniform(2.0, 8.0);
    const double angle = rng.uniform(0.0, two_pi);
    wv.fx = cycles * std::cos(angle) / double(width);
    wv.fy = cycles * std::sin(angle) / double(height);
    wv.phase = rng.uniform(0.0, two_pi);
    wv.amp = rng.uniform(sp.wave_amp_lo, sp.wave_amp_hi) * (i < 3 ? 1.0 : 0.35);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = base;
      for (const Wave& wv : waves) {
        v += wv.amp * std::cos(two_pi * (wv.fx * x + wv.fy * y) + wv.phase);
      }
      img.at(x, y) = v;
    }
  }

  // Soft-edged shapes, painter's order. Contours are roughened by a few
  // angular harmonics so edge geometry is only locally predictable.
  const int n_shapes =
      sp.shapes_lo + int(rng.below(uint64_t(sp.shapes_hi - sp.shapes_lo + 1)));
  for (int s = 0; s < n_shapes; ++s) {
    const bool ellipse = rng.below(2) == 0;
    const double cx = rng.uniform(0.0, double(width));
    const double cy = rng.uniform(0.0, double(height));
    const double a = rng.uniform(sp.shape_size_lo, sp.shape_size_hi) * dim;
    const double b = rng.uniform(sp.shape_size_lo, sp.shape_size_hi) * dim;
    const double theta = rng.uniform(0.0, two_pi);
    const double level = rng.uniform(-0.85, 0.85);
    const double edge = rng.uniform(sp.edge_lo, sp.edge_hi);
    const double opacity = rng.uniform(0.75, 1.0);
    const double gx = rng.uniform(-0.1, 0.1) / std::max(a, b);
    const double gy = rng.uniform(-0.1, 0.1) / std::max(a, b);
    struct Harmonic {
      double m, amp, phase;
    };
    Harmonic rough[3];
    for (Harmonic& hm : rough) {
      hm.m = double(3 + int(rng.below(9)));
      hm.amp = rng.uniform(0.015, 0.07);
      hm.phase = rng.uniform(0.0, two_pi);
    }
    const double ct = std::cos(theta), st = std::sin(theta);
    const double reach = std::max(a, b) * 1.3 + edge + 2.0;
    const int x0 = std::max(0, int(cx - reach)), x1 = std::min(width, int(cx + reach) + 1);
    const int y0 = std::max(0, int(cy - reach)), y1 = std::min(height, int(cy + reach) + 1);
    const double inner = std::min(a, b);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double lx = dx * ct + dy * st;
        const double ly = -dx * st + dy * ct;
        double q;
        if (ellipse) {
          q = std::sqrt((lx / a) * (lx / a) + (ly / b) * (ly / b));
        } else {
          q = std::max(std::fabs(lx) / a, std::fabs(ly) / b);
        }
        const double ang = std::atan2(ly, lx);
        double wobble = 1.0;
        for (const Harmonic& hm : rough) {
          wobble += hm.amp * std::cos(hm.m * ang + hm.phase);
        }
        const double d = (wobble - q) * inner;
        const double alpha = detail::soft_edge(d, edge) * opacity;
        if (alpha > 0.0) {
          const double sv = level + gx * lx + gy * ly;
          double& pix = img.at(x, y);
          pix += alpha * (sv - pix);
        }
      }
    }
  }

  // Blurred texture, spatially modulated so some regions are rough and
  // others stay clean.
  {
    const double amp = rng.uniform(sp.texture_amp_lo, sp.texture_amp_hi);
    std::vector<double> noise(img.pixel_count());
    for (double& n : noise) n = rng.normal();
    detail::box_blur3(noise, width, height);
    const double mfx = rng.uniform(0.5, 2.0) / double(width);
    const double mfy = rng.uniform(0.5, 2.0) / double(height);
    const double mph = rng.uniform(0.0, two_pi);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double mod =
            0.5 + 0.5 * std::cos(two_pi * (mfx * x + mfy * y) + mph);
        img.at(x, y) += amp * mod * noise[size_t(y) * width + x];
      }
    }
  }

  // Fine oriented detail: soft-windowed grating patches with random
  // orientation, frequency and phase. They average to zero, so they are
  // nearly invisible in a DC-only view, yet strong enough to survive coarse
  // quantization.
  {
    const double density =
        rng.uniform(sp.grating_density_lo, sp.grating_density_hi);
    const int n_patches = int(density * double(width) * double(height) / 1000.0);
    for (int s = 0; s < n_patches; ++s) {
      const double cx = rng.uniform(0.0, double(width));
      const double cy = rng.uniform(0.0, double(height));
      const double r = rng.uniform(sp.grating_radius_lo, sp.grating_radius_hi);
      const double ori = rng.uniform(0.0, two_pi);
      const double freq = rng.uniform(0.12, 0.45);  // cycles per pixel
      const double phase = rng.uniform(0.0, two_pi);
      const double amp = rng.uniform(sp.grating_amp_lo, sp.grating_amp_hi);
      const double co = std::cos(ori), so = std::sin(ori);
      const int x0 = std::max(0, int(cx - r) - 1), x1 = std::min(width, int(cx + r) + 2);
      const int y0 = std::max(0, int(cy - r) - 1), y1 = std::min(height, int(cy + r) + 2);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double d2 = (dx * dx + dy * dy) / (r * r);
          if (d2 >= 1.0) continue;
          const double window = (1.0 - d2) * (1.0 - d2);
          const double carrier = std::cos(two_pi * freq * (dx * co + dy * so) + phase);
          img.at(x, y) += amp * window * carrier;
        }
      }
    }
  }

  // Clamp into the sample domain and snap to the 8-bit grid.
  for (double& v : img.samples) {
    v = std::clamp(v, -1.0, 127.0 / 128.0);
    v = byte_to_sample(sample_to_byte(v));
  }
  return img;
}

inline std::vector<Image> make_synthetic_corpus(uint64_t seed, int count, int width,
                                                int height,
                                                const SynthParams& sp = {}) {
  std::vector<Image> out;
  out.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(make_synthetic_image(seed + uint64_t(i), width, height, sp));
  }
  return out;
}

}  // namespace dsr
