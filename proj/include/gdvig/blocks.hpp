#pragma once

#include <optional>
#include <span>
#include <string>

#include "gdvig/ops.hpp"
#include "gdvig/params.hpp"

namespace gdvig {

/// Everything a forward pass needs besides its inputs.
struct Context {
  Tape& tape;
  ParamStore& params;
  BnMode mode = BnMode::kTrain;
  BatchNormOptions bn{};

  Var p(ParamStore::Handle h) const { return tape.param(params.at(h)); }
};

struct LinearParams {
  ParamStore::Handle weight = 0;
  ParamStore::Handle bias = 0;

  static LinearParams create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout, Rng& rng);
  Var operator()(const Context& ctx, Var x) const;
};

struct ConvParams {
  ParamStore::Handle weight = 0;
  std::optional<ParamStore::Handle> bias;
  std::size_t stride = 1;
  std::size_t pad = 1;

  static ConvParams create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                           std::size_t k, std::size_t stride, bool with_bias, Rng& rng);
  Var operator()(const Context& ctx, Var x) const;
};

struct BatchNormParams {
  ParamStore::Handle gamma = 0;
  ParamStore::Handle beta = 0;
  ParamStore::Handle running_mean = 0;
  ParamStore::Handle running_var = 0;

  static BatchNormParams create(ParamStore& store, const std::string& name, std::size_t channels);
  Var operator()(const Context& ctx, Var x) const;
};

/// 3x3 conv -> batch norm -> ReLU.
struct ConvBnRelu {
  ConvParams conv;
  BatchNormParams bn;

  static ConvBnRelu create(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
                           std::size_t stride, Rng& rng);
  Var operator()(const Context& ctx, Var x) const;
};

/// W1: C -> C before the graph convolution, W2: 2C -> C after it.
struct GrapherParams {
  LinearParams w1;
  LinearParams w2;

  static GrapherParams create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng);
};

/// W3: C -> 4C, W4: 4C -> C.
struct FfnParams {
  static constexpr std::size_t kExpansion = 4;
  LinearParams w3;
  LinearParams w4;

  static FfnParams create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng);
};

struct CnnBlockParams {
  ConvBnRelu conv1;
  ConvBnRelu conv2;

  static CnnBlockParams create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng);
};

/// Two stride-2 conv-BN-ReLU stages, 1 -> C/2 -> C channels.
struct StemParams {
  ConvBnRelu stage1;
  ConvBnRelu stage2;

  static StemParams create(ParamStore& store, const std::string& name, std::size_t channels, Rng& rng);
};

struct StemOutput {
  Var half;     // B x C/2 x H/2 x W/2
  Var quarter;  // B x C x H/4 x W/4
};

/// X' = W2(GC(relu(W1 X))) + X on B x N x C node features.
Var grapher_block(const Context& ctx, Var x, std::span<const NeighborGraph> graphs, const GrapherParams& p);

/// Y = W4(relu(W3 X')) + X'.
Var ffn_block(const Context& ctx, Var x, const FfnParams& p);

/// Z = Conv2(Conv1(Y)) + Y with shape-preserving conv-BN-ReLU layers.
Var cnn_block(const Context& ctx, Var y, const CnnBlockParams& p);

/// Throws ConfigError unless H and W are divisible by 16.
StemOutput stem(const Context& ctx, Var image, const StemParams& p);

}  // namespace gdvig
