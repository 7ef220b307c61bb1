#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>

#include "dsr/codec.hpp"
#include "dsr/error.hpp"
#include "dsr/image.hpp"

namespace dsr {

// H(p) in bits/symbol with the usual limits H(0) = H(1) = 0; an empty
// population has entropy 0.
inline double binary_entropy(uint64_t ones, uint64_t total) {
  if (ones > total) throw DomainError("binary_entropy: ones exceeds total");
  if (total == 0) return 0.0;
  const double p = double(ones) / double(total);
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Zeroth-order entropy rate of a residual: bits per sign and bits per pixel.
inline std::pair<double, double> bps_bpp(const ResidualField& residual,
                                         uint64_t n_pixels) {
  if (n_pixels == 0) throw ConfigError("bps_bpp: pixel count must be positive");
  uint64_t ones = 0;
  for (uint8_t b : residual.bits) ones += b;
  const double h = binary_entropy(ones, residual.size());
  const double bits = h * double(residual.size());
  return {residual.size() ? h : 0.0, bits / double(n_pixels)};
}

// Accuracy of sign: fraction of restored bits equal to the true bits, which
// is the probability of zeros in the residual. Empty fields count as 1.
inline double aos(const SignField& truth, const SignField& restored) {
  if (truth.size() != restored.size()) throw ShapeError("aos: field lengths differ");
  if (truth.size() == 0) return 1.0;
  size_t match = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth.bits[i] == restored.bits[i]) ++match;
  }
  return double(match) / double(truth.size());
}

// PSNR in the 8-bit pixel domain (peak 255); identical images report +inf.
inline double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("psnr: image dimensions differ");
  }
  double sq = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const double e = (a.samples[i] - b.samples[i]) * 128.0;
    sq += e * e;
  }
  const double mse = sq / double(a.samples.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

struct EvalReport {
  std::string image;
  int qf = 0;
  uint64_t n_signs = 0;
  uint64_t n_pixels = 0;
  double bps = 0.0;
  double bpp = 0.0;
  double aos = 0.0;
  double psnr_restored = 0.0;  // restored image vs baseline reconstruction
  uint64_t rc_bytes = 0;       // actual range-coded residual size
  double wall_time = 0.0;      // seconds spent in sign retrieval + metrics
};

inline const char* eval_csv_header() {
  return "image,qf,n_signs,n_pixels,bps,bpp,aos,psnr_restored,rc_bytes,wall_time_s";
}

inline std::string eval_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%llu,%llu,%.6f,%.6f,%.6f,%.4f,%llu,%.4f",
                r.image.c_str(), r.qf, (unsigned long long)r.n_signs,
                (unsigned long long)r.n_pixels, r.bps, r.bpp, r.aos,
                r.psnr_restored, (unsigned long long)r.rc_bytes, r.wall_time);
  return buf;
}

}  // namespace dsr
