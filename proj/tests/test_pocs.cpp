#include <gtest/gtest.h>

#include <cmath>

#include "dsr/pocs.hpp"
#include "dsr/rng.hpp"
#include "dsr/synth.hpp"
#include "dsr/transform.hpp"

using namespace dsr;

namespace {

PaddedImage random_image(Rng& rng, int w, int h, double scale = 1.0) {
  PaddedImage img(w, h, w, h);
  for (double& s : img.samples) s = rng.uniform(-scale, scale);
  return img;
}

MagnitudeField random_lambda(Rng& rng, int bx, int by, double scale = 1.0) {
  MagnitudeField lam(bx, by);
  for (double& l : lam.lambda) l = rng.uniform(0.0, scale);
  return lam;
}

double l2(const PaddedImage& a, const PaddedImage& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TEST(Project, FeasibleInputPassesThrough) {
  Rng rng(1);
  PaddedImage z = random_image(rng, 16, 16, 0.5);
  // Thresholds strictly above every coefficient magnitude.
  MagnitudeField lam(2, 2);
  for (double& l : lam.lambda) l = 100.0;
  ProjectionTape tape;
  PaddedImage out = project(z, lam, &tape);
  for (size_t i = 0; i < z.samples.size(); ++i) {
    EXPECT_NEAR(out.samples[i], z.samples[i], 1e-12);  // transform round trip
  }
  for (uint8_t p : tape.pass) EXPECT_EQ(p, 1);
}

TEST(Project, ZeroThresholdGivesZeroImage) {
  Rng rng(2);
  PaddedImage z = random_image(rng, 16, 8);
  MagnitudeField lam(2, 1);  // all-zero thresholds
  PaddedImage out = project(z, lam);
  for (double s : out.samples) EXPECT_NEAR(s, 0.0, 1e-14);
}

TEST(Project, ScalarClampShape) {
  // Build an image from a single DCT coefficient and clamp it.
  auto coeff_image = [](double t) {
    CoeffBlock c{};
    c[9] = t;  // (wu=1, wv=1)
    Block b = idct2(c);
    PaddedImage img(8, 8, 8, 8);
    for (int i = 0; i < 64; ++i) img.samples[size_t(i)] = b[size_t(i)];
    return img;
  };
  MagnitudeField lam(1, 1);
  lam.lambda[9] = 3.0;
  for (auto [t, want] : {std::pair{5.0, 3.0}, {-5.0, -3.0}, {2.0, 2.0}}) {
    PaddedImage out = project(coeff_image(t), lam);
    Block blk;
    for (int i = 0; i < 64; ++i) blk[size_t(i)] = out.samples[size_t(i)];
    EXPECT_NEAR(dct2(blk)[9], want, 1e-12);
  }
}

TEST(Project, ConstraintSatisfactionIdempotenceNonExpansiveness) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    PaddedImage a = random_image(rng, 16, 16);
    PaddedImage b = random_image(rng, 16, 16);
    MagnitudeField lam = random_lambda(rng, 2, 2);
    PaddedImage pa = project(a, lam);
    PaddedImage pb = project(b, lam);
    EXPECT_LE(constraint_violation(pa, lam), 1e-12);
    EXPECT_NEAR(l2(project(pa, lam), pa), 0.0, 1e-10);
    EXPECT_LE(l2(pa, pb), l2(a, b) + 1e-12);
  }
}

TEST(Project, DistanceMinimality) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    PaddedImage z = random_image(rng, 8, 8);
    MagnitudeField lam = random_lambda(rng, 1, 1);
    PaddedImage pz = project(z, lam);
    // Any other feasible point (made feasible by clamping) is no closer.
    for (int k = 0; k < 5; ++k) {
      PaddedImage w = project(random_image(rng, 8, 8), lam);
      EXPECT_LE(l2(z, pz), l2(z, w) + 1e-12);
    }
  }
}

TEST(ProjectBackward, MaskLimits) {
  Rng rng(5);
  PaddedImage g = random_image(rng, 16, 8);
  ProjectionTape all_true(2, 1);
  std::fill(all_true.pass.begin(), all_true.pass.end(), uint8_t(1));
  PaddedImage same = project_backward(g, all_true);
  for (size_t i = 0; i < g.samples.size(); ++i) {
    EXPECT_NEAR(same.samples[i], g.samples[i], 1e-12);
  }
  ProjectionTape all_false(2, 1);
  PaddedImage zero = project_backward(g, all_false);
  for (double s : zero.samples) EXPECT_NEAR(s, 0.0, 1e-14);
}

TEST(ProjectBackward, Contraction) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    PaddedImage g = random_image(rng, 16, 16);
    ProjectionTape tape(2, 2);
    for (uint8_t& p : tape.pass) p = uint8_t(rng.below(2));
    PaddedImage out = project_backward(g, tape);
    double ni = 0.0, no = 0.0;
    for (double s : g.samples) ni += s * s;
    for (double s : out.samples) no += s * s;
    EXPECT_LE(std::sqrt(no), std::sqrt(ni) + 1e-12);
  }
}

TEST(ProjectBackward, MatchesFiniteDifferences) {
  // The projection Jacobian is symmetric, so the adjoint equals the forward
  // directional derivative. Configurations keep every coefficient at least
  // 1e-3 from a kink.
  Rng rng(7);
  const double h = 1e-6;
  int tested = 0;
  for (int trial = 0; trial < 40 && tested < 20; ++trial) {
    PaddedImage z = random_image(rng, 8, 8);
    MagnitudeField lam = random_lambda(rng, 1, 1);
    Block blk;
    for (int i = 0; i < 64; ++i) blk[size_t(i)] = z.samples[size_t(i)];
    CoeffBlock t = dct2(blk);
    bool near_kink = false;
    for (int i = 0; i < 64; ++i) {
      if (std::fabs(std::fabs(t[i]) - lam.lambda[size_t(i)]) < 1e-3) near_kink = true;
    }
    if (near_kink) continue;
    ++tested;

    ProjectionTape tape;
    project(z, lam, &tape);
    PaddedImage dir = random_image(rng, 8, 8);
    PaddedImage adj = project_backward(dir, tape);

    PaddedImage zp = z, zm = z;
    for (size_t i = 0; i < z.samples.size(); ++i) {
      zp.samples[i] += h * dir.samples[i];
      zm.samples[i] -= h * dir.samples[i];
    }
    PaddedImage fp = project(zp, lam);
    PaddedImage fm = project(zm, lam);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < z.samples.size(); ++i) {
      const double fd = (fp.samples[i] - fm.samples[i]) / (2.0 * h);
      num += (fd - adj.samples[i]) * (fd - adj.samples[i]);
      den += fd * fd;
    }
    EXPECT_LT(std::sqrt(num), 1e-5 * std::max(1.0, std::sqrt(den)));
  }
  EXPECT_GE(tested, 10);
}

TEST(Project, ShapeErrors) {
  Rng rng(8);
  PaddedImage z = random_image(rng, 16, 16);
  MagnitudeField lam(1, 1);
  EXPECT_THROW(project(z, lam), ShapeError);
  ProjectionTape tape(1, 2);
  EXPECT_THROW(project_backward(z, tape), ShapeError);
}
