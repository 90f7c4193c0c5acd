#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gdvig/autograd.hpp"
#include "gdvig/graph.hpp"

namespace gdvig {

// Differentiable operations recorded on a Tape. Image tensors are B x C x H x W,
// node tensors are B x N x C (rank-2 N x C is accepted where noted).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);
/// sum(a * weights) with a constant weight tensor.
Var weighted_sum(Var a, const Tensor& weights);

/// x[..., Cin] * weight[Cin x Cout] + bias[Cout].
Var linear(Var x, Var weight, Var bias);

/// Cross-correlation; kernel is Cout x Cin x k x k. bias (Cout) is optional.
Var conv2d(Var x, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t pad);

enum class BnMode { kTrain, kInfer };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel (axis 1) normalization. Train mode uses biased batch statistics
/// and folds them into running_mean / running_var with `momentum`.
Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, BnMode mode,
               const BatchNormOptions& opts);

Var relu(Var x);
Var sigmoid(Var x);
/// Softmax over the last axis.
Var softmax(Var x);

/// mean((a - target)^2) over all elements.
Var mse_loss(Var a, Var target);
/// Mean over the batch of -log softmax(logits)[label]; logits is B x c.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Nearest-neighbor resize of the trailing H, W axes.
Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w);

/// B x C x H x W -> B x (H*W) x C.
Var to_nodes(Var x);
/// B x N x C -> B x C x h x w.
Var to_grid(Var x, std::size_t h, std::size_t w);
/// Mean over the node axis: B x N x C -> B x C.
Var mean_nodes(Var x);
/// Mean over H, W: B x C x H x W -> B x C.
Var global_avg_pool(Var x);

/// out[b,i] = concat(x_i, max_{j in N(i)} (x_j - x_i)); graphs has one entry per batch element.
Var max_relative_gc(Var x, std::span<const NeighborGraph> graphs);

/// Value passes through, gradient is blocked.
Var detach(Var x);

}  // namespace gdvig
