#include "gdvig/blocks.hpp"

#include "gdvig/error.hpp"

namespace gdvig {

LinearParams LinearParams::create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                                  Rng& rng) {
  LinearParams p;
  p.weight = store.add(name + ".weight", init_uniform(rng, {cin, cout}, cin));
  p.bias = store.add(name + ".bias", init_uniform(rng, {cout}, cin));
  return p;
}

Var LinearParams::operator()(const Context& ctx, Var x) const { return linear(x, ctx.p(weight), ctx.p(bias)); }

ConvParams ConvParams::create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                              std::size_t k, std::size_t stride, bool with_bias, Rng& rng) {
  ConvParams p;
  const std::size_t fan_in = cin * k * k;
  p.weight = store.add(name + ".weight", init_uniform(rng, {cout, cin, k, k}, fan_in));
  if (with_bias) p.bias = store.add(name + ".bias", init_uniform(rng, {cout}, fan_in));
  p.stride = stride;
  p.pad = k / 2;
  return p;
}

Var ConvParams::operator()(const Context& ctx, Var x) const {
  std::optional<Var> b;
  if (bias) b = ctx.p(*bias);
  return conv2d(x, ctx.p(weight), b, stride, pad);
}

BatchNormParams BatchNormParams::create(ParamStore& store, const std::string& name, std::size_t channels) {
  BatchNormParams p;
  p.gamma = store.add(name + ".gamma", Tensor({channels}, 1.0));
  p.beta = store.add(name + ".beta", Tensor({channels}, 0.0));
  p.running_mean = store.add(name + ".running_mean", Tensor({channels}, 0.0), false);
  p.running_var = store.add(name + ".running_var", Tensor({channels}, 1.0), false);
  return p;
}

Var BatchNormParams::operator()(const Context& ctx, Var x) const {
  return batch_norm(x, ctx.p(gamma), ctx.p(beta), ctx.params.at(running_mean).value, ctx.params.at(running_var).value,
                    ctx.mode, ctx.bn);
}

ConvBnRelu ConvBnRelu::create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                              std::size_t stride, Rng& rng) {
  return ConvBnRelu{ConvParams::create(store, name + ".conv", cin, cout, 3, stride, false, rng),
                    BatchNormParams::create(store, name + ".bn", cout)};
}

Var ConvBnRelu::operator()(const Context& ctx, Var x) const { return relu(bn(ctx, conv(ctx, x))); }

GrapherParams GrapherParams::create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng) {
  return GrapherParams{LinearParams::create(store, name + ".w1", channels, channels, rng),
                       LinearParams::create(store, name + ".w2", 2 * channels, channels, rng)};
}

FfnParams FfnParams::create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng) {
  return FfnParams{LinearParams::create(store, name + ".w3", channels, kExpansion * channels, rng),
                   LinearParams::create(store, name + ".w4", kExpansion * channels, channels, rng)};
}

CnnBlockParams CnnBlockParams::create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng) {
  return CnnBlockParams{ConvBnRelu::create(store, name + ".conv1", channels, channels, 1, rng),
                        ConvBnRelu::create(store, name + ".conv2", channels, channels, 1, rng)};
}

StemParams StemParams::create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng) {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("stem: channel count must be even, got " + std::to_string(channels));
  return StemParams{ConvBnRelu::create(store, name + ".stage1", 1, channels / 2, 2, rng),
                    ConvBnRelu::create(store, name + ".stage2", channels / 2, channels, 2, rng)};
}

Var grapher_block(const Context& ctx, Var x, std::span<const NeighborGraph> graphs, const GrapherParams& p) {
  Var h = relu(p.w1(ctx, x));
  return add(p.w2(ctx, max_relative_gc(h, graphs)), x);
}

Var ffn_block(const Context& ctx, Var x, const FfnParams& p) {
  return add(p.w4(ctx, relu(p.w3(ctx, x))), x);
}

Var cnn_block(const Context& ctx, Var y, const CnnBlockParams& p) { return add(p.conv2(ctx, p.conv1(ctx, y)), y); }

StemOutput stem(const Context& ctx, Var image, const StemParams& p) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 1) throw DimensionError("stem: expected B x 1 x H x W, got " + shape_str(s));
  if (s[2] % 16 != 0 || s[3] % 16 != 0) {
    throw ConfigError("stem: image dims " + shape_str(s) + " must be divisible by 16");
  }
  Var half = p.stage1(ctx, image);
  return StemOutput{half, p.stage2(ctx, half)};
}

}  // namespace gdvig
