#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/rng.hpp"

namespace dsr {

inline constexpr int kBlockSize = 8;

// Grayscale image in the internal sample domain [-1, 1): an 8-bit pixel p
// maps to (p - 128) / 128.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> samples;  // row-major, width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), samples(size_t(w) * h, 0.0) {}

  double at(int x, int y) const { return samples[size_t(y) * width + x]; }
  double& at(int x, int y) { return samples[size_t(y) * width + x]; }
  size_t pixel_count() const { return size_t(width) * height; }
};

// Image padded to 8x8 block multiples by edge replication. Remembers the
// original extent so reconstructions can be cropped back.
struct PaddedImage {
  int width = 0;   // multiple of 8
  int height = 0;  // multiple of 8
  int original_width = 0;
  int original_height = 0;
  std::vector<double> samples;

  PaddedImage() = default;
  PaddedImage(int w, int h, int ow, int oh)
      : width(w), height(h), original_width(ow), original_height(oh),
        samples(size_t(w) * h, 0.0) {}

  double at(int x, int y) const { return samples[size_t(y) * width + x]; }
  double& at(int x, int y) { return samples[size_t(y) * width + x]; }
  int blocks_x() const { return width / kBlockSize; }
  int blocks_y() const { return height / kBlockSize; }
};

inline uint8_t sample_to_byte(double s) {
  const long v = std::lround(s * 128.0 + 128.0);
  return static_cast<uint8_t>(std::clamp(v, 0L, 255L));
}

inline double byte_to_sample(uint8_t p) { return (int(p) - 128) / 128.0; }

namespace detail {

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
// Consumes the single whitespace byte that terminates the token.
inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c == '#') in.unget();  // comment directly after token; next call skips it
  return tok;
}

inline int pgm_int(std::istream& in, const char* what) {
  const std::string tok = pgm_token(in);
  if (tok.empty() || tok.size() > 9 ||
      tok.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(std::string("malformed PGM header: bad ") + what);
  }
  return std::stoi(tok);
}

}  // namespace detail

// Loads a binary PGM ("P5", maxval 255). Samples are level-shifted into
// [-1, 1).
inline Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  if (detail::pgm_token(in) != "P5") {
    throw FormatError(path + ": not a binary PGM (P5) file");
  }
  const int width = detail::pgm_int(in, "width");
  const int height = detail::pgm_int(in, "height");
  const int maxval = detail::pgm_int(in, "maxval");
  if (width <= 0 || height <= 0) {
    throw FormatError(path + ": non-positive PGM dimensions");
  }
  if (maxval != 255) {
    throw UnsupportedError(path + ": unsupported PGM maxval " +
                           std::to_string(maxval) + " (only 255)");
  }

  std::vector<uint8_t> raw(size_t(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (size_t(in.gcount()) != raw.size()) {
    throw IoError(path + ": truncated PGM payload");
  }

  Image img(width, height);
  for (size_t i = 0; i < raw.size(); ++i) img.samples[i] = byte_to_sample(raw[i]);
  return img;
}

// Writes a binary PGM; samples map back via round(s*128+128) clamped to
// [0, 255], so load(save(x)) is 8-bit quantization of x.
inline void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(img.pixel_count());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = sample_to_byte(img.samples[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("write failed: " + path);
}

// Rounds dimensions up to the next block multiple, replicating the nearest
// edge sample into the new region.
inline PaddedImage pad_to_blocks(const Image& img) {
  if (img.width < 1 || img.height < 1) throw ShapeError("pad_to_blocks: empty image");
  const int pw = (img.width + kBlockSize - 1) / kBlockSize * kBlockSize;
  const int ph = (img.height + kBlockSize - 1) / kBlockSize * kBlockSize;
  PaddedImage out(pw, ph, img.width, img.height);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, img.height - 1);
    for (int x = 0; x < pw; ++x) {
      const int sx = std::min(x, img.width - 1);
      out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

inline Image crop_to_original(const PaddedImage& padded) {
  Image out(padded.original_width, padded.original_height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = padded.at(x, y);
  return out;
}

// Draws `count` square patches from the sources with a seeded generator.
// Sources smaller than the patch are skipped (warning on `warn` if given);
// the draw sequence is one (source, x, y) triple per patch.
inline std::vector<Image> crop_patches(const std::vector<Image>& sources,
                                       int patch_size, int count, uint64_t seed,
                                       std::ostream* warn = nullptr) {
  if (patch_size <= 0 || patch_size % kBlockSize != 0) {
    throw ConfigError("crop_patches: patch size must be a positive multiple of 8");
  }
  std::vector<const Image*> usable;
  for (const Image& src : sources) {
    if (src.width >= patch_size && src.height >= patch_size) {
      usable.push_back(&src);
    } else if (warn) {
      *warn << "warning: skipping " << src.width << "x" << src.height
            << " source smaller than patch size " << patch_size << "\n";
    }
  }
  if (usable.empty()) throw ConfigError("crop_patches: no usable source images");

  Rng rng(seed);
  std::vector<Image> patches;
  patches.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    const Image& src = *usable[rng.below(usable.size())];
    const int x0 = int(rng.below(uint64_t(src.width - patch_size) + 1));
    const int y0 = int(rng.below(uint64_t(src.height - patch_size) + 1));
    Image p(patch_size, patch_size);
    for (int y = 0; y < patch_size; ++y)
      for (int x = 0; x < patch_size; ++x) p.at(x, y) = src.at(x0 + x, y0 + y);
    patches.push_back(std::move(p));
  }
  return patches;
}

}  // namespace dsr
