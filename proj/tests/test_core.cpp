#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gdvig/adam.hpp"
#include "gdvig/error.hpp"
#include "gdvig/image.hpp"
#include "gdvig/kernels.hpp"
#include "gdvig/ops.hpp"
#include "gdvig/rng.hpp"
#include "gdvig/tensor_io.hpp"
#include "oracles.hpp"

using namespace gdvig;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, ShapeContracts) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at({1, 2}), 1.5);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(t.reshaped({4}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(TensorIo, RoundTripIsBitExactAfterNarrowing) {
  Rng rng(1);
  const Tensor t = narrow_to_float(random_tensor(rng, {3, 4, 5}));
  EXPECT_EQ(decode_tensor(encode_tensor(t)), t);
  const auto bytes = encode_tensor(Tensor({2}, std::vector<double>{1.0, -2.0}));
  // "GDVT", version, rank, one u32 dim, two float32 values.
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 4 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GDVT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[6], 2);
  EXPECT_EQ(bytes[7], 0);
  // 1.0f little-endian is 00 00 80 3f.
  EXPECT_EQ(bytes[10], 0x00);
  EXPECT_EQ(bytes[12], 0x80);
  EXPECT_EQ(bytes[13], 0x3f);
}

TEST(TensorIo, RejectsMalformedBytes) {
  auto bytes = encode_tensor(Tensor({2, 2}, 1.0));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_tensor(bad_version), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_tensor(truncated), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_tensor(extra), FormatError);
}

TEST(Kernels, OmpMatchesSerialReference) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(9), n = 1 + rng.below(9), k = 1 + rng.below(9);
    const bool ta = rng.bernoulli(0.5), tb = rng.bernoulli(0.5);
    const Tensor a = random_tensor(rng, {m * k}), b = random_tensor(rng, {k * n});
    Tensor c1({m * n}), c2({m * n});
    kernels::serial::gemm(ta, tb, m, n, k, a.data(), b.data(), c1.data(), false);
    kernels::omp::gemm(ta, tb, m, n, k, a.data(), b.data(), c2.data(), false);
    EXPECT_EQ(c1, c2);

    kernels::ConvGeometry g{1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3), 4 + rng.below(4), 4 + rng.below(4),
                            rng.bernoulli(0.5) ? 3u : 1u, 1 + rng.below(2), 0};
    g.pad = g.k / 2;
    const Tensor x = random_tensor(rng, {g.batch * g.in_ch * g.in_h * g.in_w});
    const Tensor w = random_tensor(rng, {g.out_ch * g.in_ch * g.k * g.k});
    Tensor o1({g.batch * g.out_ch * g.out_h() * g.out_w()}), o2 = o1;
    kernels::serial::conv2d_forward(g, x.data(), w.data(), o1.data());
    kernels::omp::conv2d_forward(g, x.data(), w.data(), o2.data());
    EXPECT_EQ(o1, o2);

    const Tensor dout = random_tensor(rng, o1.shape());
    Tensor dx1(x.shape()), dx2(x.shape()), dw1(w.shape()), dw2(w.shape());
    kernels::serial::conv2d_backward_input(g, dout.data(), w.data(), dx1.data());
    kernels::omp::conv2d_backward_input(g, dout.data(), w.data(), dx2.data());
    kernels::serial::conv2d_backward_kernel(g, dout.data(), x.data(), dw1.data());
    kernels::omp::conv2d_backward_kernel(g, dout.data(), x.data(), dw2.data());
    for (std::size_t i = 0; i < dx1.size(); ++i) EXPECT_NEAR(dx1[i], dx2[i], 1e-12);
    for (std::size_t i = 0; i < dw1.size(); ++i) EXPECT_NEAR(dw1[i], dw2[i], 1e-12);
  }
}

TEST(Ops, LinearExamples) {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 2}, std::vector<double>{1, 2}));
  Var id = tape.leaf(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}));
  EXPECT_EQ(linear(x, id, tape.leaf(Tensor({2}))).value(), Tensor({1, 2}, std::vector<double>{1, 2}));
  Var w = tape.leaf(Tensor({2, 1}, std::vector<double>{3, 4}));
  Var out = linear(x, w, tape.leaf(Tensor({1}, 1.0)));
  EXPECT_EQ(out.value()[0], 12.0);
  // d sum(out) / dx is the row sums of W^T, i.e. W's rows summed over outputs.
  tape.backward(sum(out));
  EXPECT_EQ(tape.grad(x), Tensor({1, 2}, std::vector<double>{3, 4}));
  EXPECT_THROW(linear(x, tape.leaf(Tensor({3, 1})), tape.leaf(Tensor({1}))), DimensionError);
}

TEST(Ops, Conv2dExamples) {
  Tape tape;
  Tensor k({1, 1, 3, 3});
  k.at({0, 0, 1, 1}) = 1.0;
  Var ones = tape.leaf(Tensor({1, 1, 3, 3}, 1.0));
  EXPECT_EQ(conv2d(ones, tape.leaf(k), std::nullopt, 1, 1).value(), Tensor({1, 1, 3, 3}, 1.0));

  // Ramp 0..15 under a 3x3 box average with zero padding, computed by hand.
  Tensor ramp({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  const Tensor avg({1, 1, 3, 3}, 1.0 / 9.0);
  const Tensor out = conv2d(tape.leaf(ramp), tape.leaf(avg), std::nullopt, 1, 1).value();
  const double expect[16] = {10, 18, 24, 18, 27, 45, 54, 39, 51, 81, 90, 63, 42, 66, 72, 50};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(out[i], expect[i] / 9.0, 1e-12) << i;

  Var big = tape.leaf(Tensor({1, 1, 224, 224}));
  const Tensor k3({2, 1, 3, 3}, 0.1);
  EXPECT_EQ(conv2d(big, tape.leaf(k3), std::nullopt, 2, 1).shape(), (Shape{1, 2, 112, 112}));
  // Stride 2 without padding on an even extent would skip a real input column.
  EXPECT_THROW(conv2d(tape.leaf(Tensor({1, 1, 6, 6})), tape.leaf(k3), std::nullopt, 2, 0), ConfigError);
}

TEST(Ops, BatchNormExamples) {
  Tape tape;
  Tensor x({4, 1, 1, 1}, std::vector<double>{-1.5, -0.5, 0.5, 1.5});
  // Biased variance of x is 1.25; scale it to exactly 1.
  for (double& v : x.data()) v /= std::sqrt(1.25);
  Tensor rm({1}, 0.0), rv({1}, 1.0);
  const Tensor y = batch_norm(tape.leaf(x), tape.leaf(Tensor({1}, 1.0)), tape.leaf(Tensor({1}, 0.0)), rm, rv,
                              BnMode::kTrain, BatchNormOptions{})
                       .value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);

  // Running stats: (1 - m) * init + m * batch statistic.
  Tensor x2({2, 1, 1, 2}, std::vector<double>{1, 3, 5, 7});
  Tensor rm2({1}, 0.5), rv2({1}, 2.0);
  batch_norm(tape.leaf(x2), tape.leaf(Tensor({1}, 1.0)), tape.leaf(Tensor({1})), rm2, rv2, BnMode::kTrain,
             BatchNormOptions{0.1, 1e-5});
  EXPECT_NEAR(rm2[0], 0.9 * 0.5 + 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(rv2[0], 0.9 * 2.0 + 0.1 * 5.0, 1e-15);

  // A constant channel normalizes to zero, leaving the affine shift.
  Tensor rm3({1}), rv3({1}, 1.0);
  const Tensor c = batch_norm(tape.leaf(Tensor({3, 1, 2, 2}, 4.0)), tape.leaf(Tensor({1}, 2.0)),
                              tape.leaf(Tensor({1}, 0.25)), rm3, rv3, BnMode::kTrain, BatchNormOptions{})
                       .value();
  for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Ops, ActivationExamples) {
  Tape tape;
  EXPECT_EQ(relu(tape.leaf(Tensor({2}, std::vector<double>{-1, 2}))).value(), Tensor({2}, std::vector<double>{0, 2}));
  EXPECT_EQ(sigmoid(tape.leaf(Tensor({1}, 0.0))).value()[0], 0.5);
  EXPECT_EQ(softmax(tape.leaf(Tensor({1, 2}, 0.0))).value(), Tensor({1, 2}, 0.5));
  Rng rng(3);
  const Tensor s = softmax(tape.leaf(random_tensor(rng, {5, 7}, -50, 50))).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) total += s[r * 7 + c];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, LossExamples) {
  Tape tape;
  Var gm = tape.leaf(Tensor({1, 2}, std::vector<double>{1, 0}));
  Var zero = tape.leaf(Tensor({1, 2}));
  Var l = mse_loss(gm, zero);
  EXPECT_EQ(l.value()[0], 0.5);
  tape.backward(l);
  EXPECT_EQ(tape.grad(gm), Tensor({1, 2}, std::vector<double>{1.0, 0.0}));  // (2/HW)(gm - gm_hat)
  EXPECT_EQ(mse_loss(gm, gm).value()[0], 0.0);

  const int label0[] = {0};
  EXPECT_NEAR(cross_entropy(tape.leaf(Tensor({1, 2})), label0).value()[0], std::log(2.0), 1e-15);
  const double tiny = cross_entropy(tape.leaf(Tensor({1, 2}, std::vector<double>{10, -10})), label0).value()[0];
  EXPECT_NEAR(tiny, std::log1p(std::exp(-20.0)), 1e-24);
  EXPECT_NEAR(tiny, 2.06e-9, 0.01e-9);
  const int bad[] = {2};
  EXPECT_THROW(cross_entropy(tape.leaf(Tensor({1, 2})), bad), std::out_of_range);
}

TEST(Ops, NonFiniteValuesAreSurfaced) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, 1e308));
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(Ops, ShapeFuzz) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Tape tape;
    const std::size_t b = 1 + rng.below(3), c = 1 + rng.below(4), h = 1 + rng.below(5), w = 1 + rng.below(5);
    Var x = tape.leaf(random_tensor(rng, {b, c, h, w}));
    EXPECT_EQ(relu(x).shape(), x.shape());
    EXPECT_EQ(sigmoid(x).shape(), x.shape());
    EXPECT_EQ(softmax(x).shape(), x.shape());
    EXPECT_EQ(to_nodes(x).shape(), (Shape{b, h * w, c}));
    EXPECT_EQ(to_grid(to_nodes(x), h, w).value(), x.value());
    EXPECT_EQ(global_avg_pool(x).shape(), (Shape{b, c}));
    EXPECT_EQ(upsample_nearest(x, 2 * h, 3 * w).shape(), (Shape{b, c, 2 * h, 3 * w}));
    const std::size_t co = 1 + rng.below(3);
    Var k = tape.leaf(random_tensor(rng, {co, c, 3, 3}));
    EXPECT_EQ(conv2d(x, k, std::nullopt, 1, 1).shape(), (Shape{b, co, h, w}));
    Var wl = tape.leaf(random_tensor(rng, {c, co}));
    EXPECT_EQ(linear(to_nodes(x), wl, tape.leaf(Tensor({co}))).shape(), (Shape{b, h * w, co}));
  }
}

TEST(Autograd, BackwardIsLinearInTheLoss) {
  Rng rng(5);
  const Tensor xv = random_tensor(rng, {3, 4});
  auto grad_of = [&](int which) {
    Tape tape;
    Var x = tape.leaf(xv);
    Var a = project(sigmoid(x), 11), b = project(relu(x), 12);
    Var l = which == 0 ? a : which == 1 ? b : add(a, b);
    tape.backward(l);
    return tape.grad(x);
  };
  const Tensor ga = grad_of(0), gb = grad_of(1), gs = grad_of(2);
  for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_NEAR(gs[i], ga[i] + gb[i], 1e-15);
}

TEST(Autograd, EveryOpPassesFiniteDifferences) {
  for (auto& c : gradcheck_cases(0)) {
    if (c.name == "gmg" || c.name == "gdc") continue;  // covered by the acceptance suite
    EXPECT_LE(oracle::finite_difference_error(c, 1e-6), 1e-5) << c.name;
  }
}

TEST(Adam, Examples) {
  Parameter p{"w", Tensor({2}, std::vector<double>{1.0, -1.0}), Tensor({2}), true};
  AdamState st;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step({&p}, st, cfg);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(p.value, Tensor({2}, std::vector<double>{1.0, -1.0}));

  p.grad = Tensor({2}, std::vector<double>{0.3, -2.0});
  AdamState fresh;
  adam_step({&p}, fresh, cfg);
  // First bias-corrected step: -lr * g / (|g| + eps) ~ -lr * sign(g).
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value[1], -1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-12);

  cfg.lr = 0;
  EXPECT_THROW(adam_step({&p}, fresh, cfg), ConfigError);
}

TEST(Image, ResampleExamples) {
  const Tensor c({6, 4}, 0.3);
  for (auto mode : {ResampleMode::kArea, ResampleMode::kNearest})
    for (auto [h, w] : {std::pair{3, 2}, {12, 8}, {5, 7}, {1, 1}}) {
      const Tensor r = resample2d(c, h, w, mode);
      for (double v : r.data()) EXPECT_NEAR(v, 0.3, 1e-15);
    }
  EXPECT_EQ(resample2d(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}), 1, 1, ResampleMode::kArea)[0], 0.5);
  const Tensor up = resample2d(c, 24, 16, ResampleMode::kNearest);
  const Tensor down = resample2d(up, 6, 4, ResampleMode::kArea);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(down[i], c[i], 1e-15);
  Rng rng(6);
  const Tensor r = random_tensor(rng, {7, 9}, 0.2, 0.8);
  for (auto mode : {ResampleMode::kArea, ResampleMode::kNearest}) {
    const Tensor o = resample2d(r, 4, 5, mode);
    EXPECT_GE(o.min(), r.min() - 1e-15);
    EXPECT_LE(o.max(), r.max() + 1e-15);
  }
}

TEST(Image, GaussianBlurExamples) {
  const Tensor c({9, 11}, 0.42);
  const Tensor b = gaussian_blur2d(c, 1.7);
  for (double v : b.data()) EXPECT_NEAR(v, 0.42, 1e-12);
  EXPECT_NEAR(b.sum(), c.sum(), 1e-6 * c.sum());

  Tensor impulse({15, 15});
  impulse.at({7, 7}) = 1.0;
  const Tensor bi = gaussian_blur2d(impulse, 1.0);
  double norm = 0;
  for (int i = -3; i <= 3; ++i) norm += std::exp(-0.5 * i * i);
  EXPECT_NEAR(bi.at({7, 7}), 1.0 / (norm * norm), 1e-15);
  EXPECT_LE(bi.max(), impulse.max());
  EXPECT_EQ(gaussian_kernel1d(1.0).size(), 7u);
}
