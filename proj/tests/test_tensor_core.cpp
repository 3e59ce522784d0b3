#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "caa/container.hpp"
#include "caa/memory.hpp"
#include "caa/ops.hpp"
#include "caa/rng.hpp"

using namespace caa;

namespace {

Tensor vec(std::initializer_list<double> v) { return Tensor::from_values({v.size()}, v); }

std::vector<double> values(const Tensor& t) { return t.to_doubles(); }

}  // namespace

TEST(Tensor, ShapeAndValues) {
  const Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.at({1, 2}), 6.0);
  EXPECT_EQ(t.dtype(), DType::Float64);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
  EXPECT_EQ(Tensor::scalar(3.5).rank(), 0u);
}

TEST(Tensor, Astype) {
  const Tensor t = Tensor::from_values({2}, {0.1, 0.2});
  const Tensor f = t.astype(DType::Float32);
  EXPECT_EQ(f.dtype(), DType::Float32);
  EXPECT_EQ(f.data<float>()[0], 0.1f);
  EXPECT_THROW(f.data<double>(), DTypeError);
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(relu(Tensor::scalar(-3.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(leaky_relu(Tensor::scalar(-3.0), 0.01).item(), -0.03);
  EXPECT_EQ(values(add(vec({1, 2}), vec({10, 20}))), (std::vector<double>{11, 22}));
  EXPECT_EQ(values(scale(vec({1, -2}), 3.0)), (std::vector<double>{3, -6}));
}

TEST(Elementwise, TrailingBroadcast) {
  const Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(values(mul(a, vec({1, 10, 100}))), (std::vector<double>{1, 20, 300, 4, 50, 600}));
  const Tensor col = Tensor::from_values({2, 1}, {1, 2});
  EXPECT_EQ(values(mul(a, col)), (std::vector<double>{1, 2, 3, 8, 10, 12}));
  try {
    add(a, vec({1, 2}));
    FAIL() << "expected a broadcast error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[2]"), std::string::npos) << e.what();
  }
}

TEST(Elementwise, RangeProperties) {
  const Rng rng(3);
  // Beyond |x| ~ 37 the float64 sigmoid rounds to exactly 0 or 1.
  const Tensor x = rng.uniform("x", {200}, -30.0, 30.0);
  for (double v : values(sigmoid(x))) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : values(relu(x))) EXPECT_GE(v, 0.0);
  const Tensor big = vec({-800, 800});
  for (double v : values(sigmoid(big))) EXPECT_TRUE(std::isfinite(v));
}

TEST(Contract, Examples) {
  const Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(contract(eye, vec({5, 7}), "ij,j->i")), (std::vector<double>{5, 7}));
  EXPECT_EQ(contract(vec({1, 2, 3}), vec({1, 2, 3}), "i,i->").item(), 14.0);
}

TEST(Contract, MatchesTripleLoop) {
  const Rng rng(7);
  const Tensor a = rng.uniform("a", {3, 4}, -1, 1);
  const Tensor b = rng.uniform("b", {4, 2}, -1, 1);
  const Tensor c = contract(a, b, "ik,kj->ij");
  const auto va = values(a), vb = values(b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += va[i * 4 + k] * vb[k * 2 + j];
      EXPECT_EQ(c.at({i, j}), acc);  // same ascending order, so exact
    }
}

TEST(Contract, SeededShapesMatchLoopExactly) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Rng rng(seed);
    const auto dims = rng.uniform("dims", {3}, 1, 9).to_doubles();
    const std::size_t I = dims[0], K = dims[1], J = dims[2];
    const Tensor a = rng.uniform("a", {I, K}, -1, 1), b = rng.uniform("b", {J, K}, -1, 1);
    const Tensor c = contract(a, b, "ik,jk->ji");
    const auto va = values(a), vb = values(b);
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t j = 0; j < J; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += va[i * K + k] * vb[j * K + k];
        ASSERT_EQ(c.at({j, i}), acc) << "seed " << seed;
      }
  }
}

TEST(Contract, Errors) {
  const Tensor a = Tensor::zeros({3, 4}), b = Tensor::zeros({5, 2});
  try {
    contract(a, b, "ik,kj->ij");
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("'k'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(contract(a, b, "ikk,kj->ij"), ShapeError);
  EXPECT_THROW(contract(a, a, "ik,ik"), ShapeError);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(values(softmax(vec({0, 0}), 0)), (std::vector<double>{0.5, 0.5}));
  const auto s = values(softmax(vec({std::log(2.0), 0}), 0));
  EXPECT_NEAR(s[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(values(softmax(vec({1000, 1000}), 0)), (std::vector<double>{0.5, 0.5}));
}

TEST(Softmax, SlicesSumToOne) {
  for (DType dt : {DType::Float64, DType::Float32}) {
    const double tol = dt == DType::Float64 ? 1e-12 : 1e-6;
    const Rng rng(11);
    const Tensor x = rng.uniform("x", {4, 7, 3}, -30, 30, dt);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const Tensor s = softmax(x, axis);
      const Tensor sums = reduce(s, {axis});
      for (double v : values(sums)) EXPECT_NEAR(v, 1.0, tol);
      for (double v : values(s)) {
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Reduce, Examples) {
  EXPECT_EQ(reduce(vec({2, 4}), {0}, ReduceMode::Mean).item(), 3.0);
  EXPECT_EQ(reduce(Tensor::full({2, 2}, 1.0), {0, 1}).item(), 4.0);
  EXPECT_THROW(reduce(Tensor::zeros({2, 2}), {1, 1}), ShapeError);
  EXPECT_THROW(reduce(Tensor::zeros({2, 2}), {2}), ShapeError);
}

TEST(Reduce, MeanMatchesLoop) {
  const Tensor t = Rng(5).uniform("t", {3, 5}, -1, 1);
  const Tensor m = reduce(t, {1}, ReduceMode::Mean);
  const auto v = values(t);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 5; ++j) acc += v[i * 5 + j];
    EXPECT_EQ(m.at({i}), acc / 5.0);
  }
}

TEST(Layout, ReshapeTransposePad) {
  const Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(values(reshape(t, {3, 2})), values(t));
  EXPECT_THROW(reshape(t, {4, 2}), ShapeError);
  const Tensor tt = transpose(t, {1, 0});
  EXPECT_EQ(tt.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(tt.at({j, i}), t.at({i, j}));
  EXPECT_THROW(transpose(t, {0, 0}), ShapeError);

  const Tensor p = pad_axis(Tensor::full({33, 4}, 1.0), 0, 3, 0.0);
  EXPECT_EQ(p.shape(), (Shape{36, 4}));
  for (std::size_t i = 33; i < 36; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(p.at({i, j}), 0.0);
  EXPECT_EQ(p.at({32, 3}), 1.0);
}

TEST(Layout, SliceConcatRoundTrip) {
  const Tensor t = Rng(9).uniform("t", {5, 3, 2}, -1, 1);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const std::size_t n = t.dim(axis);
    std::vector<Tensor> parts;
    for (std::size_t k = 0; k < n; ++k) parts.push_back(slice_axis(t, axis, k, k + 1));
    EXPECT_TRUE(bitwise_equal(concat(parts, axis), t));
  }
}

TEST(Rng, Deterministic) {
  const Tensor a = Rng(42).uniform("w", {4, 4}, -1, 1);
  const Tensor b = Rng(42).uniform("w", {4, 4}, -1, 1);
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_FALSE(bitwise_equal(a, Rng(43).uniform("w", {4, 4}, -1, 1)));
  EXPECT_FALSE(bitwise_equal(a, Rng(42).uniform("v", {4, 4}, -1, 1)));
  for (double v : values(a)) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Rng, PinnedStream) {
  // Guards the documented generator: mt19937_64 seeded with
  // splitmix64(seed ^ fnv1a64(name)).
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafull);
  EXPECT_EQ(Rng(1).substream_seed("x"), splitmix64(1 ^ fnv1a64("x")));
}

TEST(Rng, Permutation) {
  auto p = Rng(3).permutation("p", 10);
  EXPECT_EQ(p, Rng(3).permutation("p", 10));
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p[i], i);
}

TEST(Container, RoundTripProperty) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Rng rng(seed);
    const auto r = rng.uniform("rank", {1}, 0, 5).item();
    Shape shape;
    for (std::size_t k = 0; k < static_cast<std::size_t>(r); ++k) {
      shape.push_back(1 + static_cast<std::size_t>(rng.uniform("d" + std::to_string(k), {1}, 0, 4).item()));
    }
    const DType dt = seed % 2 ? DType::Float32 : DType::Float64;
    const Tensor t = rng.uniform("t", shape, -1e6, 1e6, dt);
    std::stringstream buf;
    container::write_tensor(buf, t);
    const Tensor back = container::read_tensor(buf);
    EXPECT_EQ(back.dtype(), dt);
    EXPECT_TRUE(bitwise_equal(back, t)) << "seed " << seed;
  }
}

TEST(Container, ByteLayout) {
  std::stringstream buf;
  container::write_tensor(buf, Tensor::from_values({2}, {1.0, -2.0}));
  const std::string s = buf.str();
  ASSERT_EQ(s.size(), 4u + 4 + 1 + 4 + 4 + 16);
  EXPECT_EQ(s.substr(0, 4), "CAAT");
  EXPECT_EQ(s[4], 1);  // version, little-endian
  EXPECT_EQ(s[8], 1);  // float64 tag
  EXPECT_EQ(s[9], 1);  // rank
  EXPECT_EQ(s[13], 2);
  // 1.0 = 0x3FF0000000000000, stored little-endian.
  EXPECT_EQ(static_cast<unsigned char>(s[17 + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(s[17 + 6]), 0xF0);
}

TEST(Container, RejectsBadInput) {
  std::stringstream good;
  container::write_tensor(good, Tensor::from_values({2}, {1.0, 2.0}));
  const std::string bytes = good.str();

  auto read = [](std::string b) {
    std::stringstream s(std::move(b));
    return container::read_tensor(s);
  };
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(read(bad), container::FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(read(bad), container::FormatError);
  bad = bytes;
  bad[8] = 7;
  EXPECT_THROW(read(bad), container::FormatError);
  EXPECT_THROW(read(bytes.substr(0, bytes.size() - 3)), container::FormatError);
}

TEST(Container, BundleRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "caa_bundle_test";
  std::filesystem::remove_all(dir);
  container::Bundle b;
  b.meta["kind"] = "test";
  b.add("z.first", Tensor::from_values({2}, {1, 2}));
  b.add("a.second", Tensor::full({1, 3}, 0.5, DType::Float32));
  container::save_bundle(dir, b);
  const container::Bundle back = container::load_bundle(dir);
  EXPECT_EQ(back.meta_value("kind"), "test");
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[0].first, "z.first");  // order kept
  EXPECT_TRUE(bitwise_equal(back.get("a.second"), b.get("a.second")));
  EXPECT_THROW(back.get("missing"), container::FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Memory, TracksLiveAndPeak) {
  const auto base = memory::live_elements();
  memory::PeakProbe probe;
  {
    const Tensor a = Tensor::zeros({100});
    EXPECT_EQ(memory::live_elements(), base + 100);
    { const Tensor b = Tensor::zeros({50}); }
  }
  EXPECT_EQ(memory::live_elements(), base);
  EXPECT_EQ(probe.peak_delta(), 150);
}
