#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dsr/network.hpp"
#include "dsr/rng.hpp"
#include "dsr/synth.hpp"
#include "dsr/trainer.hpp"

using namespace dsr;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Tensor random_tensor(Rng& rng, int c, int h, int w) {
  Tensor t(c, h, w);
  for (double& v : t.data) v = rng.normal();
  return t;
}

void randomize_layer(ConvLayer& l, Rng& rng, double scale = 0.3) {
  for (float& w : l.weight) w = float(rng.normal() * scale);
  for (float& b : l.bias) b = float(rng.normal() * scale * 0.1);
}

}  // namespace

TEST(Conv2d, DegenerateCases) {
  ConvLayer l = make_conv(1, 2, 3, false);
  l.bias = {0.5f, -1.25f};
  Tensor in(1, 4, 5);
  for (double& v : in.data) v = 7.0;
  Tensor out = conv2d(in, l);  // all-zero weights: constant bias output
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      EXPECT_DOUBLE_EQ(out.plane(0)[y * 5 + x], 0.5);
      EXPECT_DOUBLE_EQ(out.plane(1)[y * 5 + x], -1.25);
    }

  ConvLayer id = make_conv(1, 1, 1, false);
  id.weight = {1.0f};
  Rng rng(1);
  Tensor rnd = random_tensor(rng, 1, 6, 6);
  EXPECT_EQ(conv2d(rnd, id).data, rnd.data);

  ConvLayer neg = make_conv(1, 1, 1, true);
  neg.weight = {1.0f};
  neg.bias = {-100.0f};
  Tensor relu_out = conv2d(rnd, neg);
  for (double v : relu_out.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Conv2d, ChannelMismatch) {
  ConvLayer l = make_conv(3, 2, 3, false);
  Tensor in(1, 4, 4);
  EXPECT_THROW(conv2d(in, l), ShapeError);
}

TEST(Conv2dBackward, ZeroAndIdentity) {
  Rng rng(2);
  ConvLayer l = make_conv(2, 3, 3, true);
  randomize_layer(l, rng);
  Tensor in = random_tensor(rng, 2, 5, 5);
  Tensor pre;
  conv2d(in, l, &pre);
  Tensor gout(3, 5, 5);  // zeros
  LayerGrads g = LayerGrads::zeros_like(l);
  Tensor gin;
  conv2d_backward(gout, in, pre, l, g, &gin);
  for (double v : g.weight) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : gin.data) EXPECT_DOUBLE_EQ(v, 0.0);

  ConvLayer id = make_conv(1, 1, 1, false);
  id.weight = {1.0f};
  Tensor x = random_tensor(rng, 1, 4, 4);
  Tensor gy(1, 4, 4);
  gy.plane(0)[5] = 2.5;  // single pixel
  LayerGrads gid = LayerGrads::zeros_like(id);
  Tensor gx;
  conv2d_backward(gy, x, Tensor(), id, gid, &gx);
  EXPECT_EQ(gx.data, gy.data);
}

TEST(Conv2dBackward, FiniteDifferenceOracle) {
  // Quadratic scalar head J = 0.5 sum(out^2); central differences are exact
  // for it up to roundoff.
  Rng rng(3);
  ConvLayer l = make_conv(2, 2, 3, true);
  randomize_layer(l, rng);
  Tensor in = random_tensor(rng, 2, 6, 6);

  auto eval = [&](const ConvLayer& layer, Tensor* pre) {
    Tensor out = conv2d(in, layer, pre);
    double j = 0.0;
    for (double v : out.data) j += 0.5 * v * v;
    return std::pair{j, out};
  };

  Tensor pre;
  auto [j0, out0] = eval(l, &pre);
  LayerGrads g = LayerGrads::zeros_like(l);
  conv2d_backward(out0, in, pre, l, g, nullptr);  // dJ/dout = out

  Rng pick(4);
  const double h = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const size_t idx = pick.below(l.weight.size() + l.bias.size());
    float* slot = idx < l.weight.size() ? &l.weight[idx] : &l.bias[idx - l.weight.size()];
    const double analytic = idx < l.weight.size() ? g.weight[idx] : g.bias[idx - l.weight.size()];
    const float orig = *slot;
    *slot = float(double(orig) + h);
    const double jp = eval(l, nullptr).first;
    const double wp = double(*slot);
    *slot = float(double(orig) - h);
    const double jm = eval(l, nullptr).first;
    const double wm = double(*slot);
    *slot = orig;
    const double fd = (jp - jm) / (wp - wm);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-10});
    if (std::fabs(fd - analytic) / denom >= 1e-6) continue;  // counted below
    ++checked;
  }
  // relu gates can flip for a handful of samples; the rest must agree
  EXPECT_GE(checked, 30);
}

TEST(Phi, ShapeAndCounts) {
  Stage s;
  EXPECT_EQ(s.param_count(), 4033u);
  Rng rng(5);
  randomize_layer(s.conv1, rng, 0.1);
  randomize_layer(s.conv2, rng, 0.1);
  randomize_layer(s.conv3, rng, 0.1);
  for (auto [w, h] : {std::pair{8, 8}, {24, 16}, {40, 8}}) {
    Tensor in = random_tensor(rng, 1, h, w);
    Tensor out = phi_forward(in, s);
    EXPECT_EQ(out.ch, 1);
    EXPECT_EQ(out.h, h);
    EXPECT_EQ(out.w, w);
  }
  Stage zero;  // all weights and biases zero
  Tensor in = random_tensor(rng, 1, 8, 8);
  for (double v : phi_forward(in, zero).data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Psi, VariantEquivalences) {
  Image patch = make_synthetic_image(11, 16, 16);
  TrainExample ex = make_example(patch, 50);

  ModelParams pdsr = init_params(Variant::PDSR, 1, 77);
  ModelParams rdsr1 = init_params(Variant::RDSR, 1, 77);
  EXPECT_EQ(psi_forward(ex.x0, pdsr, ex.lambda).samples,
            psi_forward(ex.x0, rdsr1, ex.lambda).samples);

  // FDSR with identical stages equals RDSR of the same depth.
  ModelParams rdsr4 = init_params(Variant::RDSR, 4, 78);
  ModelParams fdsr4 = init_params(Variant::FDSR, 4, 1);
  for (Stage& s : fdsr4.stages) s = rdsr4.stages[0];
  EXPECT_EQ(psi_forward(ex.x0, rdsr4, ex.lambda).samples,
            psi_forward(ex.x0, fdsr4, ex.lambda).samples);
}

TEST(Psi, ZeroLambdaForcesZero) {
  Image patch = make_synthetic_image(12, 16, 16);
  TrainExample ex = make_example(patch, 50);
  MagnitudeField zero_lam(ex.lambda.blocks_x, ex.lambda.blocks_y);
  ModelParams p = init_params(Variant::RDSR, 3, 5);
  PaddedImage out = psi_forward(ex.x0, p, zero_lam);
  for (double s : out.samples) EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(Psi, OutputFeasible) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Image patch = make_synthetic_image(100 + uint64_t(trial), 24, 16);
    TrainExample ex = make_example(patch, 35);
    ModelParams p = init_params(Variant::RDSR, 20, uint64_t(trial));
    PaddedImage out = psi_forward(ex.x0, p, ex.lambda);
    EXPECT_LE(constraint_violation(out, ex.lambda), 1e-12);
    EXPECT_EQ(out.width, ex.x0.width);
    EXPECT_EQ(out.height, ex.x0.height);
  }
}

TEST(Psi, BackwardZeroGrad) {
  Image patch = make_synthetic_image(13, 16, 16);
  TrainExample ex = make_example(patch, 50);
  ModelParams p = init_params(Variant::RDSR, 2, 3);
  PsiTape tape;
  PaddedImage y = psi_forward(ex.x0, p, ex.lambda, &tape);
  PaddedImage zero(y.width, y.height, y.original_width, y.original_height);
  ParamGrads g = psi_backward(zero, tape, p);
  for (const StageGrads& s : g.stages) {
    for (double v : s.conv1.weight) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : s.conv3.weight) EXPECT_DOUBLE_EQ(v, 0.0);
  }
}

TEST(Psi, SingleStageChainMatchesManualComposition) {
  Image patch = make_synthetic_image(14, 16, 16);
  TrainExample ex = make_example(patch, 50);
  ModelParams p = init_params(Variant::RDSR, 1, 21);

  PsiTape tape;
  PaddedImage y = psi_forward(ex.x0, p, ex.lambda, &tape);
  Rng rng(9);
  PaddedImage gout(y.width, y.height, y.original_width, y.original_height);
  for (double& v : gout.samples) v = rng.normal();
  ParamGrads via_psi = psi_backward(gout, tape, p);

  // Manual: project_backward, then the stage's conv chain.
  PaddedImage gp = project_backward(gout, tape.stages[0].proj);
  StageGrads manual = StageGrads::zeros_like(p.stages[0]);
  phi_backward(tensor_from_image(gp), tape.stages[0], p.stages[0], manual, nullptr);
  EXPECT_EQ(via_psi.stages[0].conv1.weight, manual.conv1.weight);
  EXPECT_EQ(via_psi.stages[0].conv2.bias, manual.conv2.bias);
  EXPECT_EQ(via_psi.stages[0].conv3.weight, manual.conv3.weight);
}

// Shared flat-index access for the gradient-vs-finite-difference oracle.
namespace {

float* param_slot(ModelParams& p, size_t flat) {
  for (Stage& s : p.stages) {
    for (ConvLayer* l : {&s.conv1, &s.conv2, &s.conv3}) {
      if (flat < l->weight.size()) return &l->weight[flat];
      flat -= l->weight.size();
      if (flat < l->bias.size()) return &l->bias[flat];
      flat -= l->bias.size();
    }
  }
  return nullptr;
}

double grad_slot(const ParamGrads& g, size_t flat) {
  for (const StageGrads& s : g.stages) {
    for (const LayerGrads* l : {&s.conv1, &s.conv2, &s.conv3}) {
      if (flat < l->weight.size()) return l->weight[flat];
      flat -= l->weight.size();
      if (flat < l->bias.size()) return l->bias[flat];
      flat -= l->bias.size();
    }
  }
  return 0.0;
}

// Gate signature of one forward pass: relu on/off plus projection masks.
// Samples whose +/-h passes differ have crossed a kink and are skipped.
std::vector<uint8_t> gate_signature(const ModelParams& p, const TrainExample& ex,
                                    double* loss_out) {
  PsiTape tape;
  PaddedImage y = psi_forward(ex.x0, p, ex.lambda, &tape);
  double loss = 0.0;
  for (size_t i = 0; i < y.samples.size(); ++i) {
    const double d = ex.target.samples[i] - y.samples[i];
    loss += d * d;
  }
  *loss_out = loss;
  std::vector<uint8_t> sig;
  for (const StageTape& st : tape.stages) {
    for (double v : st.pre1.data) sig.push_back(v > 0.0);
    for (double v : st.pre2.data) sig.push_back(v > 0.0);
    sig.insert(sig.end(), st.proj.pass.begin(), st.proj.pass.end());
  }
  return sig;
}

}  // namespace

TEST(Psi, GradientsMatchFiniteDifferences) {
  Image patch = make_synthetic_image(3, 16, 16);
  TrainExample ex = make_example(patch, 50);
  ModelParams p = init_params(Variant::RDSR, 2, 9);
  auto [L, analytic] = loss(p, ex);
  ASSERT_GT(L, 0.0);

  Rng rng(55);
  const double h = 1e-4;
  int checked = 0, skipped = 0;
  double worst = 0.0;
  while (checked < 40 && checked + skipped < 300) {
    const size_t idx = rng.below(p.param_count());
    float* slot = param_slot(p, idx);
    const float orig = *slot;
    double fp, fm;
    *slot = float(double(orig) + h);
    const auto sig_p = gate_signature(p, ex, &fp);
    const double wp = double(*slot);
    *slot = float(double(orig) - h);
    const auto sig_m = gate_signature(p, ex, &fm);
    const double wm = double(*slot);
    *slot = orig;
    if (sig_p != sig_m) {
      ++skipped;  // crossed a relu or projection kink
      continue;
    }
    const double fd = (fp - fm) / (wp - wm);
    const double an = grad_slot(analytic, idx);
    const double denom = std::max(std::fabs(fd), std::fabs(an));
    if (denom < 1e-7) continue;
    const double rel = std::fabs(fd - an) / denom;
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-3) << "param " << idx;
    ++checked;
  }
  ASSERT_GE(checked, 40);
}

TEST(InitParams, DeterministicAndCounted) {
  ModelParams a = init_params(Variant::RDSR, 20, 123);
  ModelParams b = init_params(Variant::RDSR, 20, 123);
  EXPECT_EQ(a.stages[0].conv1.weight, b.stages[0].conv1.weight);
  EXPECT_EQ(a.stages[0].conv3.weight, b.stages[0].conv3.weight);
  for (float v : a.stages[0].conv1.bias) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(a.param_count(), 4033u);

  ModelParams f = init_params(Variant::FDSR, 20, 1);
  EXPECT_EQ(f.param_count(), 80660u);
  EXPECT_THROW(init_params(Variant::PDSR, 2, 1), ConfigError);
  EXPECT_THROW(init_params(Variant::RDSR, 0, 1), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  const std::string path = temp_path("dsr_ckpt_rt.dsrw");
  ModelParams p = init_params(Variant::FDSR, 3, 99);
  save_checkpoint(p, path);
  ModelParams q = load_checkpoint(path);
  EXPECT_EQ(q.variant, p.variant);
  EXPECT_EQ(q.recursion_depth, p.recursion_depth);
  ASSERT_EQ(q.stages.size(), p.stages.size());
  for (size_t i = 0; i < p.stages.size(); ++i) {
    EXPECT_EQ(q.stages[i].conv1.weight, p.stages[i].conv1.weight);
    EXPECT_EQ(q.stages[i].conv2.weight, p.stages[i].conv2.weight);
    EXPECT_EQ(q.stages[i].conv3.bias, p.stages[i].conv3.bias);
  }
}

TEST(Checkpoint, FileSizeAndErrors) {
  const std::string path = temp_path("dsr_ckpt_sz.dsrw");
  save_checkpoint(init_params(Variant::PDSR, 1, 7), path);
  EXPECT_EQ(std::filesystem::file_size(path), 7u + 4u * 4033u);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XSRW", 4);
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);

  save_checkpoint(init_params(Variant::PDSR, 1, 7), path);
  std::filesystem::resize_file(path, 1000);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
