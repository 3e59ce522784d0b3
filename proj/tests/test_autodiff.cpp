#include <gtest/gtest.h>

#include "caa/autodiff.hpp"
#include "caa/ops.hpp"
#include "caa/rng.hpp"

using namespace caa;

namespace {

void expect_all(const Tensor& t, double v, double tol = 0.0) {
  for (double e : t.to_doubles()) EXPECT_NEAR(e, v, tol);
}

// Reverse-mode vs central differences for f at x.
double gradient_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  Tape tape;
  const Tensor w = tape.watch(x);
  const Gradients g = backward(tape, f(w));
  const Tensor fd = finite_diff([&](const Tensor& v) { return f(v).item(); }, x, 1e-5);
  return max_relative_error(g.of(w), fd);
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Tensor x = tape.watch(Rng(1).uniform("x", {3, 2, 2}, -1, 1));
  const Gradients g = backward(tape, sum_all(x));
  expect_all(g.of(x), 1.0);
}

TEST(Backward, SigmoidAtZero) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::zeros({4}));
  expect_all(backward(tape, sum_all(sigmoid(x))).of(x), 0.25);
}

TEST(Backward, Errors) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::zeros({2}));
  EXPECT_THROW(backward(tape, sigmoid(x)), TapeError);  // not scalar
  EXPECT_THROW(backward(tape, Tensor::scalar(1.0)), TapeError);
  Tape other;
  const Tensor y = other.watch(Tensor::zeros({2}));
  EXPECT_THROW(backward(tape, sum_all(y)), TapeError);
}

TEST(Backward, UnusedParameterGetsZero) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::full({2}, 2.0));
  const Tensor unused = tape.watch(Tensor::full({3}, 1.0));
  const Gradients g = backward(tape, sum_all(mul(x, x)));
  expect_all(g.of(x), 4.0);
  expect_all(g.of(unused), 0.0);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    Tape tape;
    const Tensor x = tape.watch(Rng(2).uniform("x", {3, 4}, -1, 1));
    const Tensor y = softmax(contract(x, x, "ik,jk->ij"), 1);
    return backward(tape, sum_all(mul(y, y))).of(x);
  };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(FiniteDiff, Examples) {
  const Tensor fd = finite_diff(
      [](const Tensor& v) {
        double s = 0.0;
        for (double e : v.to_doubles()) s += e * e;
        return s;
      },
      Tensor::from_values({2}, {1, 2}));
  EXPECT_NEAR(fd.at({0}), 2.0, 1e-8);
  EXPECT_NEAR(fd.at({1}), 4.0, 1e-8);

  const Tensor x = Rng(4).uniform("x", {2, 3}, -1, 1);
  expect_all(finite_diff([](const Tensor& v) { return sum_all(v).item(); }, x), 1.0, 1e-9);
  expect_all(finite_diff([](const Tensor& v) { return sum_all(softmax(v, 1)).item(); }, x), 0.0,
             1e-9);
}

// Each op composition used by the kernels, checked against finite differences.
TEST(Backward, OpsMatchFiniteDiff) {
  const Rng rng(8);
  const Tensor x = rng.uniform("x", {3, 4}, -1, 1);
  const Tensor w = rng.uniform("w", {4, 2}, -1, 1);
  const Tensor b = rng.uniform("b", {4}, -1, 1);
  const Tensor r = rng.uniform("r", {3, 4}, -1, 1);
  const double tol = 1e-5;
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(relu(v), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(leaky_relu(v, 0.1), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(sigmoid(v), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(scale(mul(v, v), 0.3)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(add(v, b), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(softmax(v, 0), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(softmax(v, 1), r)); }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              return sum_all(mul(matmul_last(v, w), matmul_last(v, w)));
            }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              return sum_all(mul(contract(v, r, "ij,kj->ik"), contract(v, r, "ij,kj->ik")));
            }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              return sum_all(mul(reduce(v, {0}, ReduceMode::Mean), b));
            }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              return sum_all(mul(transpose(v, {1, 0}), transpose(r, {1, 0})));
            }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              const Tensor p = pad_axis(v, 0, 2, 0.0);
              return sum_all(mul(slice_axis(p, 0, 1, 5), reshape(pad_axis(r, 0, 1, 1.0), {4, 4})));
            }, x), tol);
  EXPECT_LT(gradient_error([&](const Tensor& v) {
              return sum_all(mul(concat({v, mul(v, v)}, 0), concat({r, r}, 0)));
            }, x), tol);
  // Broadcast operand receives the summed gradient.
  EXPECT_LT(gradient_error([&](const Tensor& v) { return sum_all(mul(mul(x, v), r)); },
                           Tensor::from_values({4}, {0.3, -0.2, 0.5, 1.1})),
            tol);
}
