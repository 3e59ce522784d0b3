#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "caa/fixtures.hpp"
#include "caa/ops.hpp"
#include "caa/oracle.hpp"

using namespace caa;

namespace {

struct Instance {
  Tensor x;
  AttnParams p;
  GateParams column, row;
};

Instance seeded(std::uint64_t seed, AttnDims d) {
  const fixtures::Model m = fixtures::make_model(d, {3, 4, {}}, seed);
  return {m.x, m.attn, m.column, m.row};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Oracle, SinglePixel) {
  Instance in = seeded(1, {1, 1, 3, 2, 2});
  const Tensor g = oracle::project(in.x, in.p.g);
  EXPECT_EQ(oracle::self_attention(in.x, in.p).to_doubles(), g.to_doubles());
  EXPECT_EQ(oracle::axial_attention(in.x, in.p).to_doubles(), g.to_doubles());
}

TEST(Oracle, ConstantInput) {
  const auto p = AttnParams::random(AttnDims::square(3, 2, 2), Rng(2));
  const Tensor x = Tensor::from_values({2, 3, 2}, {1, 1, 1, 1, 1, 1, -2, -2, -2, -2, -2, -2});
  const Tensor y = oracle::self_attention(x, p);
  const Tensor g = oracle::project(x, p.g);
  EXPECT_LE(max_abs_difference(y, g), 1e-15);
}

TEST(Oracle, BypassIsAxial) {
  Instance in = seeded(3, {3, 4, 2, 2, 3});
  EXPECT_EQ(oracle::caa(in.x, in.p, GateParams::bypassed(GateStage::Column),
                        GateParams::bypassed(GateStage::Row))
                .to_doubles(),
            oracle::axial_attention(in.x, in.p).to_doubles());
}

TEST(Oracle, ZeroGatesQuarterAxial) {
  Instance in = seeded(4, AttnDims::square(3, 3, 2));
  const Tensor y = oracle::caa(in.x, in.p, GateParams::zeros(GateStage::Column, 2, 2, 4),
                               GateParams::zeros(GateStage::Row, 2, 2, 4));
  EXPECT_LE(max_relative_error(y, scale(oracle::axial_attention(in.x, in.p), 0.25)), 1e-15);
}

TEST(Oracle, AxialMatchesBreakdownRecomposition) {
  Instance in = seeded(5, AttnDims::square(4, 5, 3));
  const Breakdown parts = breakdown(in.x, attention_maps(in.x, in.p), in.p);
  EXPECT_TRUE(bitwise_equal(oracle::axial_attention(in.x, in.p),
                            detail::to_channel_first(reduce(parts.beta, {2}))));
}

TEST(Oracle, TraceIsConsistent) {
  Instance in = seeded(6, {3, 3, 2, 2, 2});
  const oracle::CaaTrace t = oracle::caa_trace(in.x, in.p, in.column, in.row);
  EXPECT_EQ(t.alpha_full.shape(), (Shape{3, 3, 3, 3, 2}));
  EXPECT_LE(max_relative_error(reduce(t.alpha_full, {2}), t.alpha_sum), 1e-14);
  EXPECT_LE(max_relative_error(oracle::gate_mlp(t.column_stat, in.column), t.column_gate), 0.0);
  EXPECT_LE(max_relative_error(oracle::gate_mlp(t.row_stat, in.row), t.row_gate), 0.0);
}

TEST(Oracle, RefusesOverCap) {
  Instance in = seeded(7, AttnDims::square(4, 4, 2));
  oracle::OracleCaps caps;
  caps.max_rank5_elements = 4 * 4 * 4 * 4 * 2 - 1;
  EXPECT_THROW(oracle::caa(in.x, in.p, in.column, in.row, caps), CapacityError);
  EXPECT_THROW(oracle::self_attention(in.x, in.p, caps), CapacityError);
  caps.max_rank5_elements += 1;
  EXPECT_NO_THROW(oracle::caa(in.x, in.p, in.column, in.row, caps));
}

TEST(Oracle, CapFromEnvironment) {
  EXPECT_EQ(oracle::OracleCaps::from_env().max_rank5_elements, std::size_t{1} << 22);
  {
    ScopedEnv env("CAA_ORACLE_CAP", "1234");
    EXPECT_EQ(oracle::OracleCaps::from_env().max_rank5_elements, 1234u);
  }
  {
    ScopedEnv env("CAA_ORACLE_CAP", "lots");
    EXPECT_THROW(oracle::OracleCaps::from_env(), std::invalid_argument);
  }
}

TEST(Oracle, Deterministic) {
  Instance in = seeded(8, AttnDims::square(4, 3, 3));
  EXPECT_TRUE(bitwise_equal(oracle::caa(in.x, in.p, in.column, in.row),
                            oracle::caa(in.x, in.p, in.column, in.row)));
}

TEST(Fixtures, WriteAndReplay) {
  const auto dir = std::filesystem::temp_directory_path() / "caa_fixture_test";
  std::filesystem::remove_all(dir);
  fixtures::FixtureConfig cfg;
  cfg.sizes = {{2, 3, 2}, {3, 2, 1}};
  const auto names = fixtures::write_fixtures(dir, cfg, {});
  ASSERT_EQ(names, (std::vector<std::string>{"caa_h2_w3_c2", "caa_h3_w2_c1"}));
  for (const auto& r : fixtures::replay_fixtures(dir, {})) {
    EXPECT_TRUE(r.oracle_bitwise) << r.name;
    EXPECT_LE(r.efficient_error, 1e-10) << r.name;
  }
  std::filesystem::remove_all(dir);
}

TEST(Fixtures, RefusedSizeWritesNothing) {
  const auto dir = std::filesystem::temp_directory_path() / "caa_fixture_refused";
  std::filesystem::remove_all(dir);
  fixtures::FixtureConfig cfg;
  cfg.sizes = {{2, 2, 1}, {6, 6, 2}};
  oracle::OracleCaps caps;
  caps.max_rank5_elements = 1000;
  EXPECT_THROW(fixtures::write_fixtures(dir, cfg, caps), CapacityError);
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Fixtures, BundleRoundTripsModel) {
  const container::Bundle b = fixtures::make_fixture({3, 2, 2}, {}, {});
  const fixtures::Model m = fixtures::model_from_bundle(b);
  const fixtures::Model ref = fixtures::make_model(AttnDims::square(3, 2, 2), {}, 42);
  EXPECT_TRUE(bitwise_equal(m.attn.theta, ref.attn.theta));
  ASSERT_EQ(m.column.layers.size(), ref.column.layers.size());
  EXPECT_TRUE(bitwise_equal(m.row.layers.back(), ref.row.layers.back()));
  EXPECT_EQ(m.column.activation.kind, Activation::Kind::LeakyRelu);
  EXPECT_EQ(m.column.activation.slope, 0.01);
}
