#include <gtest/gtest.h>

#include <cmath>

#include "caa/attention.hpp"
#include "caa/ops.hpp"
#include "caa/oracle.hpp"

using namespace caa;

namespace {

// x[c, h, w] = base[c] at every pixel.
Tensor constant_input(const std::vector<double>& base, std::size_t H, std::size_t W) {
  std::vector<double> v;
  for (double b : base)
    for (std::size_t k = 0; k < H * W; ++k) v.push_back(b);
  return Tensor::from_values({base.size(), H, W}, v);
}

Tensor pixel(const Tensor& y, std::size_t i, std::size_t j) {
  std::vector<double> out;
  for (std::size_t c = 0; c < y.dim(0); ++c) out.push_back(y.at({c, i, j}));
  return Tensor::from_values({out.size()}, out);
}

}  // namespace

TEST(Project, IdentityAndZero) {
  const Tensor x = Rng(1).uniform("x", {3, 2, 2}, -1, 1);
  const Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_TRUE(bitwise_equal(project(x, eye), x));
  for (double v : project(x, Tensor::zeros({3, 5})).to_doubles()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(project(x, Tensor::zeros({4, 2})), ShapeError);
}

TEST(Project, MatchesPerPixelLoop) {
  const Rng rng(2);
  const Tensor x = rng.uniform("x", {3, 2, 2}, -1, 1);
  const Tensor m = rng.uniform("m", {3, 4}, -1, 1);
  const Tensor y = project(x, m);
  ASSERT_EQ(y.shape(), (Shape{4, 2, 2}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t w = 0; w < 2; ++w)
      for (std::size_t d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 3; ++c) acc += m.at({c, d}) * x.at({c, h, w});
        EXPECT_EQ(y.at({d, h, w}), acc);
      }
}

TEST(SelfAttention, SinglePixelIsValue) {
  const Rng rng(3);
  const auto p = AttnParams::random({1, 1, 3, 2, 4}, rng);
  const Tensor x = rng.uniform("x", {3, 1, 1}, -1, 1);
  EXPECT_TRUE(bitwise_equal(self_attention(x, p), project(x, p.g)));
  EXPECT_TRUE(bitwise_equal(axial_attention(x, p), project(x, p.g)));
}

TEST(SelfAttention, ConstantInputGivesConstantValue) {
  const Rng rng(4);
  const auto p = AttnParams::random(AttnDims::square(3, 4, 2), rng);
  const Tensor x = constant_input({0.3, -0.7}, 3, 4);
  const Tensor gbar = pixel(project(x, p.g), 0, 0);
  for (const Tensor& y : {self_attention(x, p), axial_attention(x, p)}) {
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_LT(max_abs_difference(pixel(y, i, j), gbar), 1e-15);
  }
}

TEST(SelfAttention, MatchesOracle) {
  const Rng rng(5);
  const auto p = AttnParams::random(AttnDims::square(3, 3, 2), rng);
  const Tensor x = rng.uniform("x", {2, 3, 3}, -1, 1);
  EXPECT_LE(max_relative_error(self_attention(x, p), oracle::self_attention(x, p)), 1e-12);
}

TEST(SelfAttention, SoftmaxShiftInvariance) {
  // Dyadic logits so the shift itself is exact; max subtraction then makes
  // the result independent of the shift.
  std::vector<double> v;
  for (double u : Rng(6).uniform("l", {4, 9}, -192, 192).to_doubles()) v.push_back(std::floor(u) / 64);
  const Tensor logits = Tensor::from_values({4, 9}, v);
  for (double shift : {250.0, -4096.0, 1e6}) {
    EXPECT_TRUE(bitwise_equal(softmax(logits, 1), softmax(add(logits, Tensor::scalar(shift)), 1)));
  }
}

TEST(AttentionMaps, ConstantInputIsUniform) {
  const Rng rng(7);
  const auto p = AttnParams::random(AttnDims::square(3, 5, 2), rng);
  const AttentionMaps maps = attention_maps(constant_input({1.0, 2.0}, 3, 5), p);
  for (double v : maps.a_col.to_doubles()) EXPECT_EQ(v, 1.0 / 3.0);
  for (double v : maps.a_row.to_doubles()) EXPECT_EQ(v, 1.0 / 5.0);
}

TEST(AttentionMaps, SingleRowColumnMapIsOne) {
  const Rng rng(8);
  const auto p = AttnParams::random(AttnDims::square(1, 4, 3), rng);
  const AttentionMaps maps = attention_maps(rng.uniform("x", {3, 1, 4}, -1, 1), p);
  for (double v : maps.a_col.to_doubles()) EXPECT_EQ(v, 1.0);
}

TEST(AttentionMaps, MatchOracleAndNormalize) {
  const Rng rng(9);
  const auto p = AttnParams::random(AttnDims::square(4, 3, 3), rng);
  const Tensor x = rng.uniform("x", {3, 4, 3}, -1, 1);
  const AttentionMaps maps = attention_maps(x, p);
  const AttentionMaps ref = oracle::attention_maps(x, p);
  EXPECT_LE(max_relative_error(maps.a_col, ref.a_col), 1e-12);
  EXPECT_LE(max_relative_error(maps.a_row, ref.a_row), 1e-12);
  for (double s : reduce(maps.a_col, {1}).to_doubles()) EXPECT_NEAR(s, 1.0, 1e-12);
  for (double s : reduce(maps.a_row, {2}).to_doubles()) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(AttentionMaps, RejectsWrongInput) {
  const auto p = AttnParams::random(AttnDims::square(2, 2, 3), Rng(1));
  EXPECT_THROW(attention_maps(Tensor::zeros({2, 2, 2}), p), ShapeError);
  EXPECT_THROW(axial_attention(Tensor::zeros({3, 2, 3}), p), ShapeError);
}

TEST(Breakdown, RecomposesAxial) {
  const Rng rng(10);
  const auto p = AttnParams::random({4, 3, 2, 2, 3}, rng);
  const Tensor x = rng.uniform("x", {2, 4, 3}, -1, 1);
  const Breakdown parts = breakdown(x, attention_maps(x, p), p);
  EXPECT_EQ(parts.alpha_sum.shape(), (Shape{4, 3, 3, 3}));
  EXPECT_FALSE(parts.alpha_full.defined());
  const Tensor recomposed = detail::to_channel_first(reduce(parts.beta, {2}));
  EXPECT_LE(max_relative_error(recomposed, axial_attention(x, p)), 1e-12);
}

TEST(Breakdown, SinglePixel) {
  const Rng rng(11);
  const auto p = AttnParams::random({1, 1, 2, 2, 3}, rng);
  const Tensor x = rng.uniform("x", {2, 1, 1}, -1, 1);
  const Breakdown parts = breakdown(x, attention_maps(x, p), p);
  const Tensor g = reshape(project(x, p.g), {1, 1, 1, 3});
  EXPECT_TRUE(bitwise_equal(parts.alpha_sum, g));
  EXPECT_TRUE(bitwise_equal(parts.beta, g));
}

TEST(Breakdown, MatchesRankFiveOracle) {
  const Rng rng(12);
  const auto p = AttnParams::random({3, 3, 2, 2, 2}, rng);
  const Tensor x = rng.uniform("x", {2, 3, 3}, -1, 1);
  const Breakdown parts = breakdown(x, attention_maps(x, p), p, {true});
  auto bypass_col = GateParams::bypassed(GateStage::Column);
  auto bypass_row = GateParams::bypassed(GateStage::Row);
  const oracle::CaaTrace t = oracle::caa_trace(x, p, bypass_col, bypass_row);
  ASSERT_TRUE(parts.alpha_full.defined());
  EXPECT_LE(max_relative_error(parts.alpha_full, t.alpha_full), 1e-12);
  // Marginalize the oracle's rank-5 alpha over m.
  EXPECT_LE(max_relative_error(parts.alpha_sum, reduce(t.alpha_full, {2})), 1e-12);
  EXPECT_LE(max_relative_error(parts.beta, t.beta), 1e-12);
}

TEST(Breakdown, FullAlphaCapped) {
  const Rng rng(13);
  const auto p = AttnParams::random(AttnDims::square(4, 4, 2), rng);
  const Tensor x = rng.uniform("x", {2, 4, 4}, -1, 1);
  BreakdownOptions opts{true, 100};
  EXPECT_THROW(breakdown(x, attention_maps(x, p), p, opts), CapacityError);
}

TEST(Axial, MatchesOracle) {
  const Rng rng(14);
  const auto p = AttnParams::random(AttnDims::square(4, 4, 3), rng);
  const Tensor x = rng.uniform("x", {3, 4, 4}, -1, 1);
  // Same ascending summation order as the literal loops.
  EXPECT_TRUE(bitwise_equal(axial_attention(x, p), oracle::axial_attention(x, p)));
}

TEST(Axial, LiteralColumnWeights) {
  // The column map is taken at the query column j and applied to the values
  // of every column n, so y(i, j) uses a_col[i, :, j] for all n.
  const Rng rng(15);
  const auto p = AttnParams::random({3, 2, 2, 2, 1}, rng);
  const Tensor x = rng.uniform("x", {2, 3, 2}, -1, 1);
  const AttentionMaps maps = attention_maps(x, p);
  const Tensor v = project(x, p.g);
  const Tensor y = axial_attention(x, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t n = 0; n < 2; ++n) {
        double inner = 0.0;
        for (std::size_t m = 0; m < 3; ++m) inner += maps.a_col.at({i, m, j}) * v.at({0, m, n});
        acc += maps.a_row.at({i, j, n}) * inner;
      }
      EXPECT_EQ(y.at({0, i, j}), acc);
    }
}

TEST(Flops, SmallExample) {
  const AttnDims d{4, 4, 1, 1, 1};
  EXPECT_EQ(flops(AttentionKind::Self, d).attention_core_macs(), 512u);
  EXPECT_EQ(flops(AttentionKind::Axial, d).attention_core_macs(), 256u);
  EXPECT_EQ(flops(AttentionKind::Self, d).total_flops(), 2 * flops(AttentionKind::Self, d).total_macs());
}

TEST(Flops, ProjectionsCountThreeMatrices) {
  const AttnDims d{3, 5, 7, 2, 4};
  // theta and phi (Cq each) plus g (Cv), at every pixel, for both kinds.
  EXPECT_EQ(flops(AttentionKind::Self, d).projection_macs, 15u * 7 * (2 + 2 + 4));
  EXPECT_EQ(flops(AttentionKind::Axial, d).projection_macs, 15u * 7 * (2 + 2 + 4));
}

TEST(Flops, AxialOverSelfRatioExact) {
  for (std::size_t H = 1; H <= 9; ++H)
    for (std::size_t W = 1; W <= 9; ++W)
      for (std::size_t C : {1, 3, 8}) {
        const AttnDims d = AttnDims::square(H, W, C);
        const auto self = flops(AttentionKind::Self, d).attention_core_macs();
        const auto axial = flops(AttentionKind::Axial, d).attention_core_macs();
        EXPECT_EQ(axial * H * W, self * (H + W));
      }
}

TEST(Flops, DoublingSpatialSize) {
  const AttnDims a = AttnDims::square(6, 10, 4), b = AttnDims::square(12, 20, 4);
  EXPECT_EQ(flops(AttentionKind::Self, b).attention_core_macs(),
            16 * flops(AttentionKind::Self, a).attention_core_macs());
  EXPECT_EQ(flops(AttentionKind::Axial, b).attention_core_macs(),
            8 * flops(AttentionKind::Axial, a).attention_core_macs());
}

TEST(Flops, GateOverheadAtReferenceGeometry) {
  const FlopReport r =
      flops(AttentionKind::Channelized, AttnDims::square(33, 33, 512), GateShape{5, 128});
  // Two stages of 512x128 + 4 x 128x128 + 128x512.
  EXPECT_EQ(r.gate_macs, 2u * (512 * 128 + 4 * 128 * 128 + 128 * 512));
  EXPECT_LT(r.gate_overhead(), 1e-3);
  EXPECT_EQ(r.gate_macs_all_sites, r.gate_macs / 2 * (33 * 33 + 33));
}
