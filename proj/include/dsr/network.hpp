#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/image.hpp"
#include "dsr/parallel.hpp"
#include "dsr/pocs.hpp"
#include "dsr/rng.hpp"
#include "dsr/transform.hpp"

namespace dsr {

enum class Variant : uint8_t { PDSR = 0, RDSR = 1, FDSR = 2 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::PDSR: return "pdsr";
    case Variant::RDSR: return "rdsr";
    case Variant::FDSR: return "fdsr";
  }
  return "?";
}

// Planar C x H x W activation tensor. All activation math runs in double;
// only the parameters themselves are float32 (the checkpoint precision).
struct Tensor {
  int ch = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c_, int h_, int w_)
      : ch(c_), h(h_), w(w_), data(size_t(c_) * h_ * w_, 0.0) {}

  double* plane(int c) { return data.data() + size_t(c) * h * w; }
  const double* plane(int c) const { return data.data() + size_t(c) * h * w; }
  size_t size() const { return data.size(); }
};

struct ConvLayer {
  int in_ch = 0, out_ch = 0, kh = 0, kw = 0;
  bool relu = false;
  std::vector<float> weight;  // [oc][ic][ky][kx]
  std::vector<float> bias;    // [oc]

  size_t param_count() const { return weight.size() + bias.size(); }
  float& w_at(int oc, int ic, int ky, int kx) {
    return weight[((size_t(oc) * in_ch + ic) * kh + ky) * kw + kx];
  }
  float w_at(int oc, int ic, int ky, int kx) const {
    return weight[((size_t(oc) * in_ch + ic) * kh + ky) * kw + kx];
  }
};

inline ConvLayer make_conv(int in_ch, int out_ch, int k, bool relu) {
  ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kh = l.kw = k;
  l.relu = relu;
  l.weight.assign(size_t(out_ch) * in_ch * k * k, 0.0f);
  l.bias.assign(size_t(out_ch), 0.0f);
  return l;
}

// One restoration stage: 5x5 1->64 relu, 1x1 64->32 relu, 3x3 32->1 linear.
// 4033 parameters.
struct Stage {
  ConvLayer conv1 = make_conv(1, 64, 5, true);
  ConvLayer conv2 = make_conv(64, 32, 1, true);
  ConvLayer conv3 = make_conv(32, 1, 3, false);

  size_t param_count() const {
    return conv1.param_count() + conv2.param_count() + conv3.param_count();
  }
};

struct ModelParams {
  Variant variant = Variant::RDSR;
  int recursion_depth = 1;    // K
  std::vector<Stage> stages;  // 1 for PDSR/RDSR, K for FDSR
  bool use_pocs = true;       // ablation switch, not serialized

  size_t param_count() const {
    size_t n = 0;
    for (const Stage& s : stages) n += s.param_count();
    return n;
  }
  const Stage& stage_for(int k) const {
    return variant == Variant::FDSR ? stages[size_t(k)] : stages[0];
  }
  Stage& stage_for(int k) {
    return variant == Variant::FDSR ? stages[size_t(k)] : stages[0];
  }
};

inline void validate_params(const ModelParams& p) {
  if (p.recursion_depth < 1) throw ConfigError("recursion depth must be >= 1");
  if (p.recursion_depth > 255) throw ConfigError("recursion depth must fit in a byte");
  const size_t want =
      p.variant == Variant::FDSR ? size_t(p.recursion_depth) : size_t(1);
  if (p.variant == Variant::PDSR && p.recursion_depth != 1) {
    throw ConfigError("PDSR requires recursion depth 1");
  }
  if (p.stages.size() != want) {
    throw ConfigError("stage count inconsistent with variant/depth");
  }
}

// ---------------------------------------------------------------------------
// Convolution

// Cross-correlation with zero "same" padding (pad = k/2), per-channel bias,
// then the layer's activation. Spatial size is preserved. If `pre` is given
// it receives the pre-activation values (needed for the relu backward).
inline Tensor conv2d(const Tensor& in, const ConvLayer& layer, Tensor* pre = nullptr) {
  if (in.ch != layer.in_ch) throw ShapeError("conv2d: input channel mismatch");
  const int h = in.h, w = in.w;
  const int ph = layer.kh / 2, pw = layer.kw / 2;
  Tensor out(layer.out_ch, h, w);
  if (pre) *pre = Tensor(layer.out_ch, h, w);

  // One task per output row: every element is produced by exactly one task
  // with a fixed inner summation order, so results do not depend on the
  // worker count.
  parallel_for(layer.out_ch * h, [&](int task) {
    const int oc = task / h, y = task % h;
    double* __restrict out_row = out.plane(oc) + size_t(y) * w;
    const double b = layer.bias[size_t(oc)];
    for (int x = 0; x < w; ++x) out_row[x] = b;
    for (int ic = 0; ic < layer.in_ch; ++ic) {
      for (int ky = 0; ky < layer.kh; ++ky) {
        const int iy = y + ky - ph;
        if (iy < 0 || iy >= h) continue;
        const double* __restrict in_row = in.plane(ic) + size_t(iy) * w;
        for (int kx = 0; kx < layer.kw; ++kx) {
          const int dx = kx - pw;
          const double wgt = layer.w_at(oc, ic, ky, kx);
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) out_row[x] += wgt * in_row[x + dx];
        }
      }
    }
    if (pre) {
      std::memcpy(pre->plane(oc) + size_t(y) * w, out_row, sizeof(double) * w);
    }
    if (layer.relu) {
      for (int x = 0; x < w; ++x) out_row[x] = out_row[x] > 0.0 ? out_row[x] : 0.0;
    }
  });
  return out;
}

// Parameter gradients of one layer, accumulated in double.
struct LayerGrads {
  std::vector<double> weight, bias;

  static LayerGrads zeros_like(const ConvLayer& l) {
    LayerGrads g;
    g.weight.assign(l.weight.size(), 0.0);
    g.bias.assign(l.bias.size(), 0.0);
    return g;
  }
  void add_scaled(const LayerGrads& o, double s) {
    for (size_t i = 0; i < weight.size(); ++i) weight[i] += s * o.weight[i];
    for (size_t i = 0; i < bias.size(); ++i) bias[i] += s * o.bias[i];
  }
};

// Exact adjoints of conv2d. `grad_out` is w.r.t. the post-activation output;
// `pre` is the taped pre-activation (only read for relu layers). Accumulates
// into `grads`; writes grad w.r.t. the input into `grad_input` if non-null.
inline void conv2d_backward(const Tensor& grad_out, const Tensor& input,
                            const Tensor& pre, const ConvLayer& layer,
                            LayerGrads& grads, Tensor* grad_input = nullptr) {
  if (grad_out.ch != layer.out_ch || input.ch != layer.in_ch ||
      grad_out.h != input.h || grad_out.w != input.w) {
    throw ShapeError("conv2d_backward: shape mismatch");
  }
  if (layer.relu && pre.size() != grad_out.size()) {
    throw ShapeError("conv2d_backward: missing pre-activation tape");
  }
  const int h = input.h, w = input.w;
  const int ph = layer.kh / 2, pw = layer.kw / 2;

  // Gate through the activation first.
  Tensor g = grad_out;
  if (layer.relu) {
    parallel_for(layer.out_ch, [&](int oc) {
      double* grow = g.plane(oc);
      const double* prow = pre.plane(oc);
      const size_t n = size_t(h) * w;
      for (size_t i = 0; i < n; ++i) {
        if (!(prow[i] > 0.0)) grow[i] = 0.0;
      }
    });
  }

  parallel_for(layer.out_ch, [&](int oc) {
    const double* gp = g.plane(oc);
    double acc = 0.0;
    const size_t n = size_t(h) * w;
    for (size_t i = 0; i < n; ++i) acc += gp[i];
    grads.bias[size_t(oc)] += acc;
  });

  // d/dW: one task per (oc, ic) kernel slice. The row dot products run over
  // 16 fixed-order lanes, which vectorizes well without reassociating the
  // per-lane sums.
  parallel_for(layer.out_ch * layer.in_ch, [&](int task) {
    const int oc = task / layer.in_ch, ic = task % layer.in_ch;
    for (int ky = 0; ky < layer.kh; ++ky) {
      for (int kx = 0; kx < layer.kw; ++kx) {
        const int dx = kx - pw;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        double lanes[16] = {0.0};
        double tail = 0.0;
        for (int y = 0; y < h; ++y) {
          const int iy = y + ky - ph;
          if (iy < 0 || iy >= h) continue;
          const double* __restrict grow = g.plane(oc) + size_t(y) * w;
          const double* __restrict irow = input.plane(ic) + size_t(iy) * w + dx;
          int x = x0;
          for (; x + 16 <= x1; x += 16) {
            for (int j = 0; j < 16; ++j) lanes[j] += grow[x + j] * irow[x + j];
          }
          for (; x < x1; ++x) tail += grow[x] * irow[x];
        }
        double acc = tail;
        for (int j = 0; j < 16; ++j) acc += lanes[j];
        grads.weight[((size_t(oc) * layer.in_ch + ic) * layer.kh + ky) * layer.kw + kx] += acc;
      }
    }
  });

  if (grad_input) {
    *grad_input = Tensor(layer.in_ch, h, w);
    parallel_for(layer.in_ch * h, [&](int task) {
      const int ic = task / h, iy = task % h;
      double* __restrict out_row = grad_input->plane(ic) + size_t(iy) * w;
      for (int oc = 0; oc < layer.out_ch; ++oc) {
        for (int ky = 0; ky < layer.kh; ++ky) {
          const int gy = iy + ph - ky;
          if (gy < 0 || gy >= h) continue;
          const double* __restrict grow = g.plane(oc) + size_t(gy) * w;
          for (int kx = 0; kx < layer.kw; ++kx) {
            const int dgx = pw - kx;
            const double wgt = layer.w_at(oc, ic, ky, kx);
            const int x0 = std::max(0, -dgx), x1 = std::min(w, w - dgx);
            for (int ix = x0; ix < x1; ++ix) out_row[ix] += wgt * grow[ix + dgx];
          }
        }
      }
    });
  }
}

// ---------------------------------------------------------------------------
// phi and psi

struct StageTape {
  Tensor input;          // conv1 input (the stage input image)
  Tensor pre1, pre2;     // pre-activations of conv1/conv2
  ProjectionTape proj;   // empty when the stage ran without POCS
};

struct PsiTape {
  std::vector<StageTape> stages;  // one per executed stage
};

struct StageGrads {
  LayerGrads conv1, conv2, conv3;

  static StageGrads zeros_like(const Stage& s) {
    StageGrads g;
    g.conv1 = LayerGrads::zeros_like(s.conv1);
    g.conv2 = LayerGrads::zeros_like(s.conv2);
    g.conv3 = LayerGrads::zeros_like(s.conv3);
    return g;
  }
};

// Parameter gradients mirroring ModelParams::stages (1 entry for PDSR/RDSR,
// K for FDSR; the shared RDSR stage accumulates over all K uses).
struct ParamGrads {
  std::vector<StageGrads> stages;

  static ParamGrads zeros_like(const ModelParams& p) {
    ParamGrads g;
    g.stages.reserve(p.stages.size());
    for (const Stage& s : p.stages) g.stages.push_back(StageGrads::zeros_like(s));
    return g;
  }
  StageGrads& stage_for(const ModelParams& p, int k) {
    return p.variant == Variant::FDSR ? stages[size_t(k)] : stages[0];
  }
  void add_scaled(const ParamGrads& o, double s) {
    for (size_t i = 0; i < stages.size(); ++i) {
      stages[i].conv1.add_scaled(o.stages[i].conv1, s);
      stages[i].conv2.add_scaled(o.stages[i].conv2, s);
      stages[i].conv3.add_scaled(o.stages[i].conv3, s);
    }
  }
};

inline Tensor tensor_from_image(const PaddedImage& img) {
  Tensor t(1, img.height, img.width);
  std::copy(img.samples.begin(), img.samples.end(), t.data.begin());
  return t;
}

inline PaddedImage image_from_tensor(const Tensor& t, const PaddedImage& like) {
  PaddedImage img(like.width, like.height, like.original_width, like.original_height);
  std::copy(t.data.begin(), t.data.end(), img.samples.begin());
  return img;
}

// One pass of the 3-layer network. Input and output are 1-channel tensors of
// identical spatial size.
inline Tensor phi_forward(const Tensor& x, const Stage& stage, StageTape* tape = nullptr) {
  if (tape) tape->input = x;
  const Tensor t1 = conv2d(x, stage.conv1, tape ? &tape->pre1 : nullptr);
  const Tensor t2 = conv2d(t1, stage.conv2, tape ? &tape->pre2 : nullptr);
  return conv2d(t2, stage.conv3, nullptr);
}

inline PaddedImage phi_forward(const PaddedImage& x, const Stage& stage,
                               StageTape* tape = nullptr) {
  return image_from_tensor(phi_forward(tensor_from_image(x), stage, tape), x);
}

namespace detail {

inline Tensor relu_of(const Tensor& pre) {
  Tensor out = pre;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

}  // namespace detail

// Backward through one stage's three conv layers. `g` is w.r.t. the stage
// output; returns grad w.r.t. the stage input if wanted.
inline void phi_backward(const Tensor& g, const StageTape& tape, const Stage& stage,
                         StageGrads& grads, Tensor* grad_input) {
  const Tensor r2 = detail::relu_of(tape.pre2);  // conv3 input
  Tensor g2;
  conv2d_backward(g, r2, Tensor(), stage.conv3, grads.conv3, &g2);
  const Tensor r1 = detail::relu_of(tape.pre1);  // conv2 input
  Tensor g1;
  conv2d_backward(g2, r1, tape.pre2, stage.conv2, grads.conv2, &g1);
  conv2d_backward(g1, tape.input, tape.pre1, stage.conv1, grads.conv1, grad_input);
}

// The composite restoration map: K repetitions of (project o phi), with the
// stage parameters shared (PDSR/RDSR) or distinct (FDSR). The final
// projection makes the output feasible for the magnitude constraints.
inline PaddedImage psi_forward(const PaddedImage& x0, const ModelParams& params,
                               const MagnitudeField& lam, PsiTape* tape = nullptr) {
  validate_params(params);
  if (x0.blocks_x() != lam.blocks_x || x0.blocks_y() != lam.blocks_y) {
    throw ShapeError("psi_forward: magnitude field does not match image");
  }
  if (tape) tape->stages.assign(size_t(params.recursion_depth), StageTape{});

  PaddedImage x = x0;
  for (int k = 0; k < params.recursion_depth; ++k) {
    StageTape* st = tape ? &tape->stages[size_t(k)] : nullptr;
    PaddedImage y = phi_forward(x, params.stage_for(k), st);
    if (params.use_pocs) {
      x = project(y, lam, st ? &st->proj : nullptr);
    } else {
      x = std::move(y);
    }
  }
  return x;
}

// Reverse-mode pass matching psi_forward. RDSR sums gradients across all K
// uses of its shared stage; FDSR fills per-stage gradients.
inline ParamGrads psi_backward(const PaddedImage& grad_out, const PsiTape& tape,
                               const ModelParams& params) {
  validate_params(params);
  if (tape.stages.size() != size_t(params.recursion_depth)) {
    throw ConfigError("psi_backward: tape does not match recursion depth");
  }
  ParamGrads grads = ParamGrads::zeros_like(params);
  PaddedImage g = grad_out;
  for (int k = params.recursion_depth - 1; k >= 0; --k) {
    const StageTape& st = tape.stages[size_t(k)];
    if (params.use_pocs) {
      if (st.proj.empty()) throw ConfigError("psi_backward: tape missing projection");
      g = project_backward(g, st.proj);
    }
    Tensor grad_in;
    phi_backward(tensor_from_image(g), st, params.stage_for(k),
                 grads.stage_for(params, k), k > 0 ? &grad_in : nullptr);
    if (k > 0) g = image_from_tensor(grad_in, g);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Initialization and checkpoints

namespace detail {

inline void init_layer(ConvLayer& l, Rng& rng) {
  const double fan_in = double(l.in_ch) * l.kh * l.kw;
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (float& w : l.weight) w = static_cast<float>(rng.normal() * std_dev);
  std::fill(l.bias.begin(), l.bias.end(), 0.0f);
}

}  // namespace detail

// He-normal kernels (std sqrt(2/fan_in)), zero biases. Deterministic per seed.
inline ModelParams init_params(Variant variant, int k, uint64_t seed) {
  if (k < 1) throw ConfigError("recursion depth must be >= 1");
  if (variant == Variant::PDSR && k != 1) {
    throw ConfigError("PDSR requires recursion depth 1");
  }
  ModelParams p;
  p.variant = variant;
  p.recursion_depth = k;
  p.stages.assign(variant == Variant::FDSR ? size_t(k) : size_t(1), Stage{});
  Rng rng(seed);
  for (Stage& s : p.stages) {
    detail::init_layer(s.conv1, rng);
    detail::init_layer(s.conv2, rng);
    detail::init_layer(s.conv3, rng);
  }
  return p;
}

namespace detail {

inline void put_f32(std::string& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(char(u & 0xFF));
  out.push_back(char((u >> 8) & 0xFF));
  out.push_back(char((u >> 16) & 0xFF));
  out.push_back(char((u >> 24) & 0xFF));
}

inline float get_f32(const uint8_t* p) {
  const uint32_t u = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                     uint32_t(p[3]) << 24;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline void serialize_layer(std::string& out, const ConvLayer& l) {
  for (float w : l.weight) put_f32(out, w);
  for (float b : l.bias) put_f32(out, b);
}

inline const uint8_t* deserialize_layer(const uint8_t* p, const uint8_t* end,
                                        ConvLayer& l) {
  const size_t need = l.param_count() * 4;
  if (size_t(end - p) < need) throw IoError("truncated checkpoint");
  for (float& w : l.weight) {
    w = get_f32(p);
    p += 4;
  }
  for (float& b : l.bias) {
    b = get_f32(p);
    p += 4;
  }
  return p;
}

}  // namespace detail

// DSRW checkpoint: "DSRW" | version u8 = 1 | variant u8 | K u8 | float32 LE
// parameters, stage by stage, each stage as conv1 weights, conv1 bias,
// conv2 weights, conv2 bias, conv3 weights, conv3 bias.
inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  validate_params(params);
  std::string buf;
  buf += "DSRW";
  buf.push_back(char(1));
  buf.push_back(char(uint8_t(params.variant)));
  buf.push_back(char(uint8_t(params.recursion_depth)));
  for (const Stage& s : params.stages) {
    detail::serialize_layer(buf, s.conv1);
    detail::serialize_layer(buf, s.conv2);
    detail::serialize_layer(buf, s.conv3);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 7) throw IoError("truncated checkpoint: " + path);
  if (buf.compare(0, 4, "DSRW") != 0) throw FormatError(path + ": bad checkpoint magic");
  if (uint8_t(buf[4]) != 1) throw FormatError(path + ": unsupported checkpoint version");
  const uint8_t variant_byte = uint8_t(buf[5]);
  if (variant_byte > 2) throw FormatError(path + ": bad variant byte");
  const int k = int(uint8_t(buf[6]));
  if (k < 1) throw FormatError(path + ": bad recursion depth");

  ModelParams p;
  p.variant = Variant(variant_byte);
  p.recursion_depth = k;
  p.stages.assign(p.variant == Variant::FDSR ? size_t(k) : size_t(1), Stage{});
  const uint8_t* ptr = reinterpret_cast<const uint8_t*>(buf.data()) + 7;
  const uint8_t* end = reinterpret_cast<const uint8_t*>(buf.data()) + buf.size();
  for (Stage& s : p.stages) {
    ptr = detail::deserialize_layer(ptr, end, s.conv1);
    ptr = detail::deserialize_layer(ptr, end, s.conv2);
    ptr = detail::deserialize_layer(ptr, end, s.conv3);
  }
  if (ptr != end) throw FormatError(path + ": trailing bytes in checkpoint");
  validate_params(p);
  return p;
}

}  // namespace dsr
