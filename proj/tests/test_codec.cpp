#include <gtest/gtest.h>

#include <cmath>

#include "dsr/bitio.hpp"
#include "dsr/codec.hpp"
#include "dsr/rangecoder.hpp"
#include "dsr/rng.hpp"
#include "dsr/synth.hpp"

using namespace dsr;

namespace {

CoeffGrid grid_of(const Image& img, int qf) {
  const QuantTable table = scale_quant_table(base_quant_table(), qf);
  return forward_grid(pad_to_blocks(img), table);
}

std::vector<uint8_t> random_bits(Rng& rng, size_t n, double p_one) {
  std::vector<uint8_t> bits(n);
  for (auto& b : bits) b = rng.real() < p_one ? 1 : 0;
  return bits;
}

}  // namespace

TEST(ExtractSigns, Cases) {
  const QuantTable table = base_quant_table();
  CoeffGrid zero(2, 2);
  EXPECT_TRUE(extract_signs(zero, table).first.bits.empty());

  CoeffGrid one(1, 1);
  one.block(0)[kZigzag[1]] = -3;
  SignField f = extract_signs(one, table).first;
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.bits[0], 1);

  Image img = make_synthetic_image(31, 40, 24);
  CoeffGrid g = grid_of(img, 50);
  EXPECT_EQ(extract_signs(g, table).first.size(), nonzero_ac_count(g));
}

TEST(ExtractSigns, MagnitudeIncludesDc) {
  QuantTable table = base_quant_table();
  CoeffGrid g(1, 1);
  g.block(0)[0] = -5;
  auto [signs, mags] = extract_signs(g, table);
  EXPECT_TRUE(signs.bits.empty());  // DC carries no sign bit
  EXPECT_DOUBLE_EQ(mags.block(0)[0], 5.0 * table.step(0));
}

TEST(InitialImage, Cases) {
  QuantTable table = base_quant_table();  // DC step 16/128
  CoeffGrid zero(1, 2);
  PaddedImage z = initial_image(zero, table);
  for (double s : z.samples) EXPECT_DOUBLE_EQ(s, 0.0);

  CoeffGrid g(1, 1);
  g.block(0)[0] = 8;
  PaddedImage x = initial_image(g, table);
  for (double s : x.samples) EXPECT_DOUBLE_EQ(s, 0.125);  // 8*(16/128)/8
}

TEST(SignResidual, XorAlgebra) {
  Rng rng(5);
  SignField t, r;
  t.bits = random_bits(rng, 300, 0.5);
  r.bits = random_bits(rng, 300, 0.5);
  ResidualField e = sign_residual(t, r);
  EXPECT_EQ(apply_residual(r, e), t);  // involution

  SignField same = t;
  for (uint8_t b : sign_residual(t, same).bits) EXPECT_EQ(b, 0);
  SignField opp;
  for (uint8_t b : t.bits) opp.bits.push_back(b ^ 1);
  for (uint8_t b : sign_residual(t, opp).bits) EXPECT_EQ(b, 1);

  SignField shorter;
  shorter.bits = random_bits(rng, 299, 0.5);
  EXPECT_THROW(sign_residual(t, shorter), ShapeError);
  ResidualField bad;
  bad.bits = random_bits(rng, 299, 0.5);
  EXPECT_THROW(apply_residual(t, bad), ShapeError);
}

TEST(BitIo, ExpGolombRoundTrip) {
  Rng rng(6);
  std::vector<uint32_t> ue_vals = {0, 1, 2, 5, 63, 255, 100000};
  std::vector<int32_t> se_vals = {0, 1, -1, 7, -7, 1000, -32768};
  for (int i = 0; i < 200; ++i) {
    ue_vals.push_back(uint32_t(rng.below(1 << 20)));
    se_vals.push_back(int32_t(rng.below(1 << 16)) - (1 << 15));
  }
  BitWriter bw;
  for (uint32_t v : ue_vals) bw.put_ue(v);
  for (int32_t v : se_vals) bw.put_se(v);
  const std::vector<uint8_t> bytes = bw.finish();
  BitReader br(bytes);
  for (uint32_t v : ue_vals) EXPECT_EQ(br.get_ue(), v);
  for (int32_t v : se_vals) EXPECT_EQ(br.get_se(), v);
}

TEST(BitIo, Underrun) {
  std::vector<uint8_t> empty;
  BitReader br(empty);
  EXPECT_THROW(br.get_bit(), IoError);
}

TEST(RangeCoder, RoundTrip) {
  Rng rng(7);
  for (double p : {0.0, 0.02, 0.3, 0.5, 0.97}) {
    const std::vector<uint8_t> bits = random_bits(rng, 100000, p);
    const std::vector<uint8_t> coded = rc_encode_bits(bits);
    EXPECT_EQ(rc_decode_bits(coded, bits.size()), bits);
  }
}

TEST(RangeCoder, SkewedInputCompresses) {
  std::vector<uint8_t> zeros(100000, 0);
  EXPECT_LT(rc_encode_bits(zeros).size(), 200u);
}

TEST(RangeCoder, BalancedInputNearOneBitPerBit) {
  Rng rng(8);
  const std::vector<uint8_t> bits = random_bits(rng, 100000, 0.5);
  const size_t bytes = rc_encode_bits(bits).size();
  EXPECT_NEAR(double(bytes), 12500.0, 125.0);  // within 1%
}

TEST(RangeCoder, EmptyAndTruncated) {
  EXPECT_TRUE(rc_encode_bits({}).empty());
  EXPECT_TRUE(rc_decode_bits({}, 0).empty());
  Rng rng(9);
  const std::vector<uint8_t> coded = rc_encode_bits(random_bits(rng, 1000, 0.5));
  std::vector<uint8_t> cut(coded.begin(), coded.begin() + 10);
  EXPECT_THROW(rc_decode_bits(cut, 1000), IoError);
}

TEST(Encode, ConstantImageHasEmptyResidual) {
  Image img(32, 32);
  for (double& s : img.samples) s = 0.25;
  ModelParams p = init_params(Variant::RDSR, 1, 1);
  const Bitstream stream = encode(img, 50, &p);
  const StreamInfo info = parse_stream(stream);
  EXPECT_TRUE(info.sign_section.empty());
}

TEST(Codec, BitExactRoundTrip) {
  ModelParams p = init_params(Variant::RDSR, 2, 42);
  for (int i = 0; i < 4; ++i) {
    const Image img = make_synthetic_image(500 + uint64_t(i), 85 + 13 * i, 61 + 7 * i);
    for (int qf : {5, 25, 50, 75, 95}) {
      const QuantTable table = scale_quant_table(base_quant_table(), qf);
      const CoeffGrid enc_grid = forward_grid(pad_to_blocks(img), table);
      const Image baseline = baseline_image(enc_grid, table, img.width, img.height);
      for (bool no_retrieval : {false, true}) {
        const Bitstream stream = encode(img, qf, no_retrieval ? nullptr : &p, no_retrieval);
        const StreamInfo info = parse_stream(stream);
        const CoeffGrid dec_grid = decode_grid(info, no_retrieval ? nullptr : &p);
        EXPECT_EQ(dec_grid.levels, enc_grid.levels);
        const Image out = decode(stream, no_retrieval ? nullptr : &p);
        ASSERT_EQ(out.samples.size(), baseline.samples.size());
        for (size_t k = 0; k < out.samples.size(); ++k) {
          ASSERT_EQ(sample_to_byte(out.samples[k]), sample_to_byte(baseline.samples[k]))
              << "qf " << qf << " mode " << no_retrieval;
        }
      }
    }
  }
}

TEST(Codec, RetrievalIsDeterministic) {
  const Image img = make_synthetic_image(77, 64, 48);
  const QuantTable table = scale_quant_table(base_quant_table(), 50);
  const CoeffGrid grid = grid_of(img, 50);
  ModelParams p = init_params(Variant::FDSR, 3, 6);
  EXPECT_EQ(retrieve_signs(grid, table, p), retrieve_signs(grid, table, p));

  // Decoder-side grid: AC signs stripped, DC kept; retrieval must agree.
  CoeffGrid stripped = grid;
  for (int b = 0; b < stripped.block_count(); ++b) {
    int16_t* levels = stripped.block(b);
    for (int pos = 1; pos < 64; ++pos) {
      int16_t& v = levels[kZigzag[pos]];
      v = int16_t(std::abs(int(v)));
    }
  }
  EXPECT_EQ(retrieve_signs(grid, table, p), retrieve_signs(stripped, table, p));
}

TEST(Decode, ErrorPaths) {
  const Image img = make_synthetic_image(88, 40, 40);
  ModelParams p = init_params(Variant::RDSR, 2, 4);
  Bitstream stream = encode(img, 50, &p);

  Bitstream bad_magic = stream;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_stream(bad_magic), FormatError);

  Bitstream truncated(stream.begin(), stream.begin() + 10);
  EXPECT_THROW(parse_stream(truncated), FormatError);

  // Retrieval stream without params, then with a mismatched checkpoint.
  EXPECT_THROW(decode(stream, nullptr), ConfigError);
  ModelParams wrong_k = init_params(Variant::RDSR, 3, 4);
  EXPECT_THROW(decode(stream, &wrong_k), ConfigError);
  ModelParams wrong_variant = init_params(Variant::FDSR, 2, 4);
  EXPECT_THROW(decode(stream, &wrong_variant), ConfigError);

  // Baseline stream decodes with no model at all.
  const Bitstream raw = encode(img, 50, nullptr, true);
  EXPECT_NO_THROW(decode(raw, nullptr));

  EXPECT_THROW(encode(img, 0, &p), ConfigError);
  EXPECT_THROW(encode(img, 50, nullptr, false), ConfigError);
}

TEST(Codec, SectionLengthsConsistent) {
  const Image img = make_synthetic_image(99, 56, 32);
  ModelParams p = init_params(Variant::PDSR, 1, 2);
  const Bitstream stream = encode(img, 30, &p);
  const StreamInfo info = parse_stream(stream);
  const size_t expected = 16 + 12 + info.dc_section.size() + info.ac_section.size() +
                          info.sign_section.size();
  EXPECT_EQ(stream.size(), expected);
  EXPECT_EQ(info.qf, 30);
  EXPECT_EQ(info.original_width, 56);
  EXPECT_EQ(info.original_height, 32);
}
