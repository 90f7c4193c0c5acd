#include "gdvig/gradcheck.hpp"

#include <cmath>

#include "gdvig/gdc.hpp"
#include "gdvig/gmg.hpp"
#include "gdvig/rng.hpp"

namespace gdvig {

Var project(Var v, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(v.shape());
  for (double& x : w.data()) x = rng.uniform(-1.0, 1.0);
  return weighted_sum(v, w);
}

namespace {

double norm(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

double rel_error(const Tensor& analytic, const Tensor& numeric) {
  Tensor d = analytic;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= numeric[i];
  const double scale = std::max({norm(analytic), norm(numeric), 1e-8});
  return norm(d) / scale;
}

}  // namespace

GradcheckResult run_gradcheck(GradcheckCase& c, double h, double tol) {
  auto evaluate = [&](bool with_grad, std::vector<Tensor>* input_grads) {
    Tape tape;
    Context ctx{tape, c.params, c.mode, BatchNormOptions{}};
    std::vector<Var> in;
    for (const auto& x : c.inputs) in.push_back(tape.leaf(x));
    Var out = c.build(ctx, in);
    if (with_grad) {
      c.params.zero_grad();
      tape.backward(out);
      for (const auto& v : in) input_grads->push_back(tape.grad(v));
    }
    return out.value().item();
  };

  std::vector<Tensor> input_grads;
  evaluate(true, &input_grads);
  std::vector<std::pair<std::string, Tensor>> analytic;
  std::vector<Tensor*> targets;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    analytic.emplace_back("input" + std::to_string(i), input_grads[i]);
    targets.push_back(&c.inputs[i]);
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    Parameter& p = c.params.at(i);
    if (!p.trainable) continue;
    analytic.emplace_back(p.name, p.grad.size() ? p.grad : Tensor(p.value.shape()));
    targets.push_back(&p.value);
  }

  GradcheckResult r;
  r.name = c.name;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    Tensor& x = *targets[t];
    Tensor numeric(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = evaluate(false, nullptr);
      x[i] = saved - h;
      const double down = evaluate(false, nullptr);
      x[i] = saved;
      numeric[i] = (up - down) / (2 * h);
    }
    r.entries += x.size();
    const double e = rel_error(analytic[t].second, numeric);
    if (e >= r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_tensor = analytic[t].first;
    }
  }
  r.passed = r.max_rel_error <= tol;
  return r;
}

std::vector<GradcheckCase> gradcheck_cases(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x67726164ULL));
  auto random = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
  };
  const std::uint64_t pseed = derive_seed(seed, 1);
  std::vector<GradcheckCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> inputs,
                      std::function<Var(const Context&, std::span<const Var>)> build) {
    GradcheckCase c;
    c.name = std::move(name);
    c.inputs = std::move(inputs);
    c.build = std::move(build);
    cases.push_back(std::move(c));
    return &cases.back();
  };

  add_case("add", {random({2, 3}), random({2, 3})}, [=](const Context&, auto in) { return project(add(in[0], in[1]), pseed); });
  add_case("sub", {random({2, 3}), random({2, 3})}, [=](const Context&, auto in) { return project(sub(in[0], in[1]), pseed); });
  add_case("scale", {random({4})}, [=](const Context&, auto in) { return project(scale(in[0], -2.5), pseed); });
  add_case("sum", {random({3, 2})}, [](const Context&, auto in) { return sum(in[0]); });
  add_case("linear", {random({2, 5, 3}), random({3, 4}), random({4})},
           [=](const Context&, auto in) { return project(linear(in[0], in[1], in[2]), pseed); });
  add_case("conv2d_s1_bias", {random({2, 2, 5, 5}), random({3, 2, 3, 3}), random({3})},
           [=](const Context&, auto in) { return project(conv2d(in[0], in[1], in[2], 1, 1), pseed); });
  add_case("conv2d_s2", {random({1, 2, 6, 6}), random({2, 2, 3, 3})},
           [=](const Context&, auto in) { return project(conv2d(in[0], in[1], std::nullopt, 2, 1), pseed); });
  add_case("conv2d_1x1", {random({2, 3, 4, 4}), random({2, 3, 1, 1}), random({2})},
           [=](const Context&, auto in) { return project(conv2d(in[0], in[1], in[2], 1, 0), pseed); });
  for (BnMode mode : {BnMode::kTrain, BnMode::kInfer}) {
    auto* c = add_case(mode == BnMode::kTrain ? "batch_norm_train" : "batch_norm_infer",
                       {random({3, 2, 3, 3}), random({2}, 0.5, 1.5), random({2})}, nullptr);
    c->mode = mode;
    auto mean = std::make_shared<Tensor>(random({2}, -0.2, 0.2));
    auto var = std::make_shared<Tensor>(random({2}, 0.5, 1.5));
    c->build = [=](const Context& ctx, auto in) {
      Tensor m = *mean, v = *var;  // running stats must not drift between evaluations
      return project(batch_norm(in[0], in[1], in[2], m, v, ctx.mode, BatchNormOptions{}), pseed);
    };
  }
  add_case("relu", {random({3, 4})}, [=](const Context&, auto in) { return project(relu(in[0]), pseed); });
  add_case("sigmoid", {random({3, 4}, -3, 3)}, [=](const Context&, auto in) { return project(sigmoid(in[0]), pseed); });
  add_case("softmax", {random({3, 4}, -3, 3)}, [=](const Context&, auto in) { return project(softmax(in[0]), pseed); });
  add_case("mse_loss", {random({2, 1, 3, 3}), random({2, 1, 3, 3}, 0, 1)},
           [](const Context&, auto in) { return mse_loss(in[0], in[1]); });
  add_case("cross_entropy", {random({4, 3}, -3, 3)}, [](const Context&, auto in) {
    static const int labels[] = {0, 2, 1, 2};
    return cross_entropy(in[0], labels);
  });
  add_case("upsample_nearest", {random({2, 2, 3, 3})},
           [=](const Context&, auto in) { return project(upsample_nearest(in[0], 6, 6), pseed); });
  add_case("to_nodes", {random({2, 3, 2, 2})}, [=](const Context&, auto in) { return project(to_nodes(in[0]), pseed); });
  add_case("to_grid", {random({2, 4, 3})}, [=](const Context&, auto in) { return project(to_grid(in[0], 2, 2), pseed); });
  add_case("mean_nodes", {random({2, 5, 3})}, [=](const Context&, auto in) { return project(mean_nodes(in[0]), pseed); });
  add_case("global_avg_pool", {random({2, 3, 3, 3})},
           [=](const Context&, auto in) { return project(global_avg_pool(in[0]), pseed); });

  // Fixed graphs for the graph convolution and the grapher block.
  auto graphs = std::make_shared<std::vector<NeighborGraph>>();
  {
    const Tensor x = random({2, 9, 4});
    for (std::size_t b = 0; b < 2; ++b) {
      const NodeGrid g = node_grid_from_batch(x, b, 3, 3, false);
      graphs->push_back(knn_build(g, std::nullopt, GraphConfig{3, 0.0, false}));
    }
  }
  add_case("max_relative_gc", {random({2, 9, 4})},
           [=](const Context&, auto in) { return project(max_relative_gc(in[0], *graphs), pseed); });

  {
    auto* c = add_case("grapher_block", {random({2, 9, 4})}, nullptr);
    const GrapherParams p = GrapherParams::create(c->params, "g", 4, rng);
    c->build = [=](const Context& ctx, auto in) { return project(grapher_block(ctx, in[0], *graphs, p), pseed); };
  }
  {
    auto* c = add_case("ffn_block", {random({2, 9, 4})}, nullptr);
    const FfnParams p = FfnParams::create(c->params, "f", 4, rng);
    c->build = [=](const Context& ctx, auto in) { return project(ffn_block(ctx, in[0], p), pseed); };
  }
  {
    auto* c = add_case("grapher_ffn_stack", {random({2, 9, 4})}, nullptr);
    const GrapherParams g = GrapherParams::create(c->params, "g", 4, rng);
    const FfnParams f = FfnParams::create(c->params, "f", 4, rng);
    c->build = [=](const Context& ctx, auto in) {
      return project(ffn_block(ctx, grapher_block(ctx, in[0], *graphs, g), f), pseed);
    };
  }
  {
    auto* c = add_case("cnn_block", {random({2, 3, 4, 4})}, nullptr);
    const CnnBlockParams p = CnnBlockParams::create(c->params, "c", 3, rng);
    c->build = [=](const Context& ctx, auto in) { return project(cnn_block(ctx, in[0], p), pseed); };
  }
  {
    auto* c = add_case("stem", {random({2, 1, 16, 16}, 0, 1)}, nullptr);
    const StemParams p = StemParams::create(c->params, "s", 4, rng);
    c->build = [=](const Context& ctx, auto in) {
      const StemOutput s = stem(ctx, in[0], p);
      return add(project(s.half, pseed), project(s.quarter, pseed + 1));
    };
  }
  {
    auto* c = add_case("gmg", {random({2, 1, 16, 16}, 0, 1), random({2, 1, 16, 16}, 0, 1)}, nullptr);
    const GmgParams p = GmgParams::create(c->params, GmgConfig{GmgVariant::kGnnPlusCnn, 1, 8, 3, false}, rng);
    c->build = [=](const Context& ctx, auto in) { return gmg_loss(in[1], gmg_forward(ctx, in[0], p)); };
  }
  {
    auto* c = add_case("gdc", {random({2, 1, 32, 32}, 0, 1)}, nullptr);
    GdcConfig cfg;
    cfg.num_classes = 3;
    cfg.stages = {{1, 4}, {1, 8}};
    cfg.k = 4;
    const GdcParams p = GdcParams::create(c->params, cfg, rng);
    Tensor gaze = random({2, 1, 32, 32}, 0, 1);
    c->build = [=](const Context& ctx, auto in) {
      static const int labels[] = {2, 0};
      return cross_entropy(gdc_forward(ctx, in[0], gaze, p).logits, labels);
    };
  }
  return cases;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, double h, double tol) {
  std::vector<GradcheckResult> out;
  for (auto& c : gradcheck_cases(seed)) out.push_back(run_gradcheck(c, h, tol));
  return out;
}

}  // namespace gdvig
