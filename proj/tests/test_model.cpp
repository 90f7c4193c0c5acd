#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gdvig/adam.hpp"
#include "gdvig/error.hpp"
#include "gdvig/gdc.hpp"
#include "gdvig/gmg.hpp"
#include "gdvig/model.hpp"
#include "gdvig/rng.hpp"

using namespace gdvig;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void zero_param(ParamStore& store, ParamStore::Handle h) { store.at(h).value.fill(0.0); }

void zero_linear(ParamStore& store, const LinearParams& l) {
  zero_param(store, l.weight);
  zero_param(store, l.bias);
}

NeighborGraph full_graph(std::size_t n) {
  NeighborGraph g{n, n - 1, {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) g.neighbors.push_back(j);
  return g;
}

ModelConfig small_model(GmgVariant v = GmgVariant::kGnnPlusCnn) {
  ModelConfig m;
  m.image_size = 32;
  m.base_channels = 8;
  m.gmg_variant = v;
  m.encoder_depth = 1;
  m.gdc_depths = {1, 1};
  m.k = 4;
  return m;
}

}  // namespace

TEST(MaxRelativeGc, TwoNodeExample) {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 2, 1}, std::vector<double>{0, 3}));
  const NeighborGraph g{2, 1, {1, 0}};
  const Var y = max_relative_gc(x, std::span(&g, 1));
  EXPECT_EQ(y.value(), Tensor({1, 2, 2}, std::vector<double>({0, 3, 3, -3})));
}

TEST(MaxRelativeGc, IdenticalNodesGiveZeroRelativePart) {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 4, 3}, 0.7));
  const NeighborGraph g = full_graph(4);
  const Tensor y = max_relative_gc(x, std::span(&g, 1)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(y.at({0, i, c}), 0.7);
      EXPECT_EQ(y.at({0, i, 3 + c}), 0.0);
    }
  }
}

TEST(MaxRelativeGc, NeighborOrderDoesNotMatter) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8, k = 4;
    Tape tape;
    Var x = tape.leaf(random_tensor(rng, {1, n, 5}));
    NeighborGraph g{n, k, {}};
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> pool;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) pool.push_back(j);
      for (std::size_t r = 0; r < k; ++r) std::swap(pool[r], pool[r + rng.below(pool.size() - r)]);
      g.neighbors.insert(g.neighbors.end(), pool.begin(), pool.begin() + k);
    }
    NeighborGraph shuffled = g;
    for (std::size_t i = 0; i < n; ++i)
      std::reverse(shuffled.neighbors.begin() + i * k, shuffled.neighbors.begin() + (i + 1) * k);
    EXPECT_EQ(max_relative_gc(x, std::span(&g, 1)).value(), max_relative_gc(x, std::span(&shuffled, 1)).value());
  }
}

TEST(Blocks, ZeroOutputLayerMakesEveryBlockAnIdentity) {
  Rng rng(2);
  ParamStore store;
  const auto gp = GrapherParams::create(store, "g", 6, rng);
  const auto fp = FfnParams::create(store, "f", 6, rng);
  const auto cp = CnnBlockParams::create(store, "c", 3, rng);
  zero_linear(store, gp.w2);
  zero_linear(store, fp.w4);
  zero_param(store, cp.conv2.bn.gamma);
  zero_param(store, cp.conv2.bn.beta);
  Tape tape;
  const Context ctx{tape, store};
  const Tensor nodes = random_tensor(rng, {2, 5, 6});
  const std::vector<NeighborGraph> graphs{full_graph(5), full_graph(5)};
  EXPECT_EQ(grapher_block(ctx, tape.leaf(nodes), graphs, gp).value(), nodes);
  EXPECT_EQ(ffn_block(ctx, tape.leaf(nodes), fp).value(), nodes);
  const Tensor grid = random_tensor(rng, {2, 3, 4, 4});
  EXPECT_EQ(cnn_block(ctx, tape.leaf(grid), cp).value(), grid);
}

TEST(Blocks, FfnHandExample) {
  // Single channel, W3 = [1,-1,2,0] with zero bias, W4 = [1,1,1,1] with bias 0.5.
  ParamStore store;
  Rng rng(0);
  const auto fp = FfnParams::create(store, "f", 1, rng);
  store.at(fp.w3.weight).value = Tensor({1, 4}, std::vector<double>{1, -1, 2, 0});
  zero_param(store, fp.w3.bias);
  store.at(fp.w4.weight).value = Tensor({4, 1}, std::vector<double>{1, 1, 1, 1});
  store.at(fp.w4.bias).value = Tensor({1}, 0.5);
  Tape tape;
  const Context ctx{tape, store};
  const Tensor y = ffn_block(ctx, tape.leaf(Tensor({1, 2, 1}, std::vector<double>{2, -1})), fp).value();
  // x=2: relu(2,-2,4,0) sums to 6, +0.5 +2 = 8.5. x=-1: relu(-1,1,-2,0) sums to 1, +0.5 -1 = 0.5.
  EXPECT_DOUBLE_EQ(y[0], 8.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Blocks, CnnBlockWithIdentityKernels) {
  ParamStore store;
  Rng rng(0);
  const auto cp = CnnBlockParams::create(store, "c", 1, rng);
  for (const ConvBnRelu* l : {&cp.conv1, &cp.conv2}) {
    Tensor& w = store.at(l->conv.weight).value;
    w.fill(0.0);
    w.at({0, 0, 1, 1}) = 1.0;
    if (l->conv.bias) zero_param(store, *l->conv.bias);
  }
  Tape tape;
  const Context ctx{tape, store, BnMode::kInfer};
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, -2, 3, -4});
  const Tensor y = cnn_block(ctx, tape.leaf(x), cp).value();
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = std::max(0.0, std::max(0.0, x[i] * s) * s) + x[i];
    EXPECT_NEAR(y[i], expect, 1e-12);
  }
}

TEST(Stem, QuartersTheGridAndSetsChannels) {
  ParamStore store;
  Rng rng(1);
  const auto sp = StemParams::create(store, "s", 8, rng);
  Tape tape;
  const Context ctx{tape, store};
  const StemOutput o = stem(ctx, tape.leaf(random_tensor(rng, {1, 1, 224, 224}, 0, 1)), sp);
  EXPECT_EQ(o.half.shape(), (Shape{1, 4, 112, 112}));
  EXPECT_EQ(o.quarter.shape(), (Shape{1, 8, 56, 56}));
  EXPECT_THROW(stem(ctx, tape.leaf(Tensor({1, 1, 24, 32})), sp), ConfigError);
  EXPECT_THROW(stem(ctx, tape.leaf(Tensor({1, 2, 32, 32})), sp), DimensionError);
  EXPECT_THROW(StemParams::create(store, "odd", 7, rng), ConfigError);
}

TEST(Stem, ShapeFuzz) {
  Rng rng(9);
  ParamStore store;
  const auto sp = StemParams::create(store, "s", 4, rng);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t b = 1 + rng.below(3), h = 16 * (1 + rng.below(4)), w = 16 * (1 + rng.below(4));
    Tape tape;
    const Context ctx{tape, store};
    const StemOutput o = stem(ctx, tape.leaf(random_tensor(rng, {b, 1, h, w})), sp);
    EXPECT_EQ(o.quarter.shape(), (Shape{b, 4, h / 4, w / 4}));
  }
}

TEST(Stem, ConstantImageGivesConstantInteriorPerChannel) {
  ParamStore store;
  Rng rng(4);
  const auto sp = StemParams::create(store, "s", 4, rng);
  Tape tape;
  const Context ctx{tape, store, BnMode::kInfer};
  const Tensor q = stem(ctx, tape.leaf(Tensor({1, 1, 64, 64}, 0.6)), sp).quarter.value();
  // Zero padding perturbs the border; cells at least two away from it see only real input.
  for (std::size_t c = 0; c < 4; ++c) {
    const double ref = q.at({0, c, 2, 2});
    for (std::size_t i = 2; i + 2 < 16; ++i)
      for (std::size_t j = 2; j + 2 < 16; ++j) EXPECT_NEAR(q.at({0, c, i, j}), ref, 1e-12);
  }
}

class GmgVariants : public ::testing::TestWithParam<GmgVariant> {};

TEST_P(GmgVariants, OutputShapeAndRange) {
  ParamStore store;
  Rng rng(3);
  const auto p = GmgParams::create(store, GmgConfig{GetParam(), 1, 8, 4, false}, rng);
  Tape tape;
  const Context ctx{tape, store};
  const Tensor gm = gmg_forward(ctx, tape.leaf(random_tensor(rng, {2, 1, 32, 32}, 0, 1)), p).value();
  ASSERT_EQ(gm.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_GE(gm.min(), 0.0);
  EXPECT_LE(gm.max(), 1.0);
}

TEST_P(GmgVariants, ZeroHeadGivesOneHalf) {
  ParamStore store;
  Rng rng(3);
  const auto p = GmgParams::create(store, GmgConfig{GetParam(), 1, 8, 4, false}, rng);
  zero_param(store, p.head.weight);
  if (p.head.bias) zero_param(store, *p.head.bias);
  Tape tape;
  const Context ctx{tape, store};
  const Tensor gm = gmg_forward(ctx, tape.leaf(random_tensor(rng, {1, 1, 32, 32}, 0, 1)), p).value();
  for (double v : gm.data()) EXPECT_EQ(v, 0.5);
}

TEST_P(GmgVariants, DeterministicForFixedSeed) {
  auto run = [] {
    ParamStore store;
    Rng rng(17);
    const auto p = GmgParams::create(store, GmgConfig{GetParam(), 1, 8, 4, false}, rng);
    Tape tape;
    const Context ctx{tape, store};
    return gmg_forward(ctx, tape.leaf(random_tensor(rng, {2, 1, 32, 32}, 0, 1)), p).value();
  };
  EXPECT_EQ(run(), run());
}

INSTANTIATE_TEST_SUITE_P(All, GmgVariants,
                         ::testing::Values(GmgVariant::kCnnOnly, GmgVariant::kGnnOnly, GmgVariant::kGnnPlusCnn),
                         [](const auto& info) { return to_string(info.param); });

TEST(Gmg, VariantNamesRoundTrip) {
  for (GmgVariant v : {GmgVariant::kCnnOnly, GmgVariant::kGnnOnly, GmgVariant::kGnnPlusCnn})
    EXPECT_EQ(parse_gmg_variant(to_string(v)), v);
  EXPECT_THROW(parse_gmg_variant("transformer"), ConfigError);
}

TEST(Gmg, LossExample) {
  Tape tape;
  const Var a = tape.leaf(Tensor({1, 1, 2, 2}, 0.5));
  const Var b = tape.leaf(Tensor({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1}));
  EXPECT_DOUBLE_EQ(gmg_loss(a, b).value().item(), 0.25);
}

TEST(Gmg, OverfitsOneSampleAndLossFallsEarly) {
  ParamStore store;
  Rng rng(21);
  const auto p = GmgParams::create(store, GmgConfig{GmgVariant::kGnnPlusCnn, 1, 8, 4, false}, rng);
  const Tensor image = random_tensor(rng, {1, 1, 32, 32}, 0, 1);
  Tensor target({1, 1, 32, 32});
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j)
      target.at({0, 0, i, j}) = std::exp(-(std::pow(i - 12.0, 2) + std::pow(j - 20.0, 2)) / 18.0);
  AdamState state;
  const AdamConfig adam{1e-3};
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    store.zero_grad();
    Tape tape;
    const Context ctx{tape, store};
    const Var loss = gmg_loss(gmg_forward(ctx, tape.leaf(image), p), tape.constant(target));
    losses.push_back(loss.value().item());
    if (losses.back() < 1e-3) break;
    tape.backward(loss);
    adam_step(store.trainable(), state, adam);
  }
  ASSERT_GE(losses.size(), 10u);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
  EXPECT_LT(losses.back(), 1e-3) << "after " << losses.size() << " steps";
}

TEST(Gdc, LogitsShapeAndGraphs) {
  ParamStore store;
  Rng rng(6);
  const GdcConfig cfg{3, {{1, 8}, {2, 16}}, 4, 3.0, false};
  const auto p = GdcParams::create(store, cfg, rng);
  Tape tape;
  const Context ctx{tape, store};
  const GdcOutput o =
      gdc_forward(ctx, tape.leaf(random_tensor(rng, {2, 1, 32, 32}, 0, 1)), random_tensor(rng, {2, 1, 32, 32}, 0, 1), p);
  EXPECT_EQ(o.logits.shape(), (Shape{2, 3}));
  EXPECT_EQ(o.features.shape(), (Shape{2, 16, 16}));
  EXPECT_EQ(o.grid_h, 4u);
  ASSERT_EQ(o.graphs.size(), 3u);
  for (const auto& per_block : o.graphs) {
    ASSERT_EQ(per_block.size(), 2u);
    for (const auto& g : per_block) EXPECT_NO_THROW(validate_graph(g));
  }
  EXPECT_THROW(GdcParams::create(store, GdcConfig{1, {{1, 8}}, 4, 3.0, false}, rng), ConfigError);
}

TEST(Gdc, FirstGraphMatchesStandaloneConstruction) {
  ParamStore store;
  Rng rng(8);
  const GdcConfig cfg{2, {{1, 8}}, 5, 7.0, false};
  const auto p = GdcParams::create(store, cfg, rng);
  const Tensor image = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  const Tensor gaze = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  Tape tape;
  const Context ctx{tape, store};
  const Var s = stem(ctx, tape.leaf(image), p.stem).quarter;
  const GdcOutput o = gdc_forward_from_stem(ctx, s, gaze, p);
  const Tensor nodes = to_nodes(s).value();
  for (std::size_t b = 0; b < 2; ++b) {
    const auto plane = gaze.data().subspan(b * 1024, 1024);
    const GazeGrid g = downsample_gaze(Tensor({32, 32}, std::vector<double>(plane.begin(), plane.end())), 8, 8);
    EXPECT_EQ(o.graphs[0][b], gdgc(node_grid_from_batch(nodes, b, 8, 8, false), g, cfg));
  }
}

TEST(Gdc, ZeroGazeWeightEqualsPlainClassifier) {
  ParamStore store;
  Rng rng(10);
  const GdcConfig cfg{2, {{1, 8}, {1, 16}}, 4, 0.0, false};
  const auto p = GdcParams::create(store, cfg, rng);
  const Tensor image = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  Tape tape;
  const Context ctx{tape, store, BnMode::kInfer};
  const Tensor with = gdc_forward(ctx, tape.leaf(image), random_tensor(rng, {2, 1, 32, 32}, 0, 1), p).logits.value();
  const Tensor without = gdc_forward(ctx, tape.leaf(image), std::nullopt, p).logits.value();
  EXPECT_EQ(with, without);
}

TEST(Gdc, Deterministic) {
  auto run = [] {
    ParamStore store;
    Rng rng(12);
    const auto p = GdcParams::create(store, GdcConfig{2, {{1, 8}, {1, 16}}, 4, 3.0, false}, rng);
    Tape tape;
    const Context ctx{tape, store};
    return gdc_forward(ctx, tape.leaf(random_tensor(rng, {2, 1, 32, 32}, 0, 1)),
                       random_tensor(rng, {2, 1, 32, 32}, 0, 1), p)
        .logits.value();
  };
  EXPECT_EQ(run(), run());
}

TEST(JointLoss, ZeroInputsExample) {
  Tape tape;
  const Var gm = tape.leaf(Tensor({1, 1, 2, 2}, 0.5));
  const Var target = tape.constant(Tensor({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1}));
  const Var logits = tape.leaf(Tensor({1, 2}, 0.0));
  const std::vector<int> labels{1};
  const JointLoss l = joint_loss(gm, target, logits, labels, 1.0);
  EXPECT_NEAR(l.total.value().item(), 0.25 + std::log(2.0), 1e-12);
  EXPECT_NEAR(classifier_loss(logits, labels, 2.0).total.value().item(), 2 * std::log(2.0), 1e-12);
}

TEST(JointLoss, GradientIsSumOfComponentGradients) {
  Rng rng(14);
  ModelConfig m = small_model();
  m.image_size = 32;
  const GdVig base = GdVig::create(m, 3);
  const Tensor image = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  const Tensor target = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  const std::vector<int> labels{0, 1};
  const double lambda_c = 0.7;

  auto grads = [&](int which) {
    GdVig model = base;
    model.params.zero_grad();
    Tape tape;
    const Context ctx{tape, model.params};
    const ForwardResult r = forward(ctx, model, tape.leaf(image), ForwardOptions{});
    const JointLoss l = joint_loss(*r.gaze, tape.constant(target), r.gdc.logits, labels, lambda_c);
    tape.backward(which == 0 ? l.total : which == 1 ? *l.gmg : scale(l.gdc, lambda_c));
    std::vector<Tensor> out;
    for (const Parameter* p : model.params.trainable())
      out.push_back(p->grad.empty() ? Tensor(p->value.shape()) : p->grad);
    return out;
  };
  const auto total = grads(0), g1 = grads(1), g2 = grads(2);
  ASSERT_EQ(total.size(), g1.size());
  double max_err = 0;
  for (std::size_t i = 0; i < total.size(); ++i)
    for (std::size_t j = 0; j < total[i].size(); ++j)
      max_err = std::max(max_err, std::abs(total[i][j] - g1[i][j] - g2[i][j]));
  EXPECT_LT(max_err, 1e-10);
}

TEST(Model, SharedStemCarriesClassifierGradientIntoGenerator) {
  Rng rng(15);
  const Tensor image = random_tensor(rng, {2, 1, 32, 32}, 0, 1);
  const std::vector<int> labels{0, 1};
  for (bool detach_gmg : {false, true}) {
    GdVig model = GdVig::create(small_model(), 4);
    model.params.zero_grad();
    Tape tape;
    const Context ctx{tape, model.params};
    ForwardOptions opts;
    opts.detach_gmg = detach_gmg;
    const ForwardResult r = forward(ctx, model, tape.leaf(image), opts);
    tape.backward(cross_entropy(r.gdc.logits, labels));
    double stem_grad = 0;
    for (const Parameter* p : model.params.trainable_with_prefix("stem."))
      if (!p->grad.empty())
        for (double g : p->grad.data()) stem_grad += std::abs(g);
    if (detach_gmg) {
      EXPECT_EQ(stem_grad, 0.0);
    } else {
      EXPECT_GT(stem_grad, 0.0);
    }
  }
}

TEST(Model, CheckpointRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "gdvig_test_ckpt";
  std::filesystem::remove_all(dir);
  RunConfig cfg;
  cfg.model = small_model(GmgVariant::kGnnOnly);
  cfg.train.seed = 5;
  GdVig model = GdVig::create(cfg.model, cfg.train.seed);
  Rng rng(1);
  for (Parameter* p : model.params.trainable())
    for (double& v : p->value.data()) v = static_cast<float>(rng.uniform(-1, 1));
  save_checkpoint(dir, model, cfg);
  const LoadedCheckpoint back = load_checkpoint(dir);
  EXPECT_EQ(to_text(back.cfg), to_text(cfg));
  ASSERT_EQ(back.model.params.size(), model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    EXPECT_EQ(back.model.params.all()[i].name, model.params.all()[i].name);
    EXPECT_EQ(back.model.params.all()[i].value, model.params.all()[i].value);
  }
  std::filesystem::remove_all(dir);
}

TEST(Model, CheckpointRejectsMismatchedShapes) {
  const auto dir = std::filesystem::temp_directory_path() / "gdvig_test_ckpt_bad";
  std::filesystem::remove_all(dir);
  RunConfig cfg;
  cfg.model = small_model();
  save_checkpoint(dir, GdVig::create(cfg.model, 0), cfg);
  ModelConfig wider = cfg.model;
  wider.base_channels = 16;
  GdVig other = GdVig::create(wider, 0);
  EXPECT_ANY_THROW(other.params.load(dir));
  std::filesystem::remove_all(dir);
}
