#include "gdvig/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "gdvig/error.hpp"
#include "gdvig/image.hpp"
#include "gdvig/kernels.hpp"

namespace gdvig {
namespace {

void add_into(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

std::size_t spatial_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t a = 2; a < s.size(); ++a) n *= s[a];
  return n;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape().record("add", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gi) {
    add_into(gi[0], g);
    add_into(gi[1], g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gi) {
    add_into(gi[0], g);
    if (gi[1]) {
      auto d = gi[1]->data();
      auto s = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record("scale", std::move(out), {a}, [s](const Tensor& g, std::span<Tensor* const> gi) {
    auto d = gi[0]->data();
    auto src = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * src[i];
  });
}

Var sum(Var a) {
  return a.tape().record("sum", Tensor::scalar(a.value().sum()), {a},
                         [](const Tensor& g, std::span<Tensor* const> gi) {
                           for (double& v : gi[0]->data()) v += g[0];
                         });
}

Var weighted_sum(Var a, const Tensor& weights) {
  require_same_shape(a.shape(), weights.shape(), "weighted_sum");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += a.value()[i] * weights[i];
  return a.tape().record("weighted_sum", Tensor::scalar(total), {a},
                         [weights](const Tensor& g, std::span<Tensor* const> gi) {
                           auto d = gi[0]->data();
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * weights[i];
                         });
}

Var linear(Var x, Var weight, Var bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 2 || xs.back() != ws[0] || bias.value().size() != ws[1] || bias.shape().size() != 1) {
    throw DimensionError("linear: x " + shape_str(xs) + " incompatible with weight " + shape_str(ws) + " / bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t cin = ws[0], cout = ws[1], m = x.value().size() / cin;
  Shape out_shape = xs;
  out_shape.back() = cout;
  Tensor out(out_shape);
  kernels::omp::gemm(false, false, m, cout, cin, x.value().data(), weight.value().data(), out.data(), false);
  auto o = out.data();
  auto b = bias.value().data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < cout; ++j) o[r * cout + j] += b[j];
  return x.tape().record("linear", std::move(out), {x, weight, bias},
                         [x, weight, m, cin, cout](const Tensor& g, std::span<Tensor* const> gi) {
                           if (gi[0]) {
                             kernels::omp::gemm(false, true, m, cin, cout, g.data(), weight.value().data(),
                                                gi[0]->data(), true);
                           }
                           if (gi[1]) {
                             kernels::omp::gemm(true, false, cin, cout, m, x.value().data(), g.data(),
                                                gi[1]->data(), true);
                           }
                           if (gi[2]) {
                             auto db = gi[2]->data();
                             for (std::size_t r = 0; r < m; ++r)
                               for (std::size_t j = 0; j < cout; ++j) db[j] += g[r * cout + j];
                           }
                         });
}

Var conv2d(Var x, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4 || ks[1] != xs[1] || ks[2] != ks[3]) {
    throw DimensionError("conv2d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ks));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  kernels::ConvGeometry geo{xs[0], xs[1], ks[0], xs[2], xs[3], ks[2], stride, pad};
  for (std::size_t extent : {xs[2], xs[3]}) {
    // Windows are floored; the leftover may only cover trailing padding, never real input.
    if (extent + 2 * pad < geo.k || (extent + 2 * pad - geo.k) % stride > pad) {
      throw ConfigError("conv2d: non-integer output dim for extent " + std::to_string(extent) + ", k=" +
                        std::to_string(geo.k) + ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
    }
  }
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ks[0])) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match kernel " + shape_str(ks));
  }
  const std::size_t oh = geo.out_h(), ow = geo.out_w();
  Tensor out({xs[0], ks[0], oh, ow});
  kernels::omp::conv2d_forward(geo, x.value().data(), kernel.value().data(), out.data());
  if (bias) {
    auto o = out.data();
    auto bv = bias->value().data();
    for (std::size_t b = 0; b < geo.batch; ++b)
      for (std::size_t c = 0; c < geo.out_ch; ++c)
        for (std::size_t p = 0; p < oh * ow; ++p) o[(b * geo.out_ch + c) * oh * ow + p] += bv[c];
  }
  Tape& tape = x.tape();
  auto backward = [x, kernel, geo, oh, ow](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) kernels::omp::conv2d_backward_input(geo, g.data(), kernel.value().data(), gi[0]->data());
    if (gi[1]) kernels::omp::conv2d_backward_kernel(geo, g.data(), x.value().data(), gi[1]->data());
    if (gi.size() > 2 && gi[2]) {
      auto db = gi[2]->data();
      for (std::size_t b = 0; b < geo.batch; ++b)
        for (std::size_t c = 0; c < geo.out_ch; ++c) {
          double s = 0.0;
          for (std::size_t p = 0; p < oh * ow; ++p) s += g[(b * geo.out_ch + c) * oh * ow + p];
          db[c] += s;
        }
    }
  };
  if (bias) return tape.record("conv2d", std::move(out), {x, kernel, *bias}, backward);
  return tape.record("conv2d", std::move(out), {x, kernel}, backward);
}

Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, BnMode mode,
               const BatchNormOptions& opts) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("batch_norm: need a channel axis, got " + shape_str(xs));
  if (!(opts.eps > 0)) throw ConfigError("batch_norm: eps must be > 0");
  const std::size_t batch = xs[0], ch = xs[1], sp = spatial_size(xs);
  const Shape cshape{ch};
  require_same_shape(gamma.shape(), cshape, "batch_norm gamma");
  require_same_shape(beta.shape(), cshape, "batch_norm beta");
  require_same_shape(running_mean.shape(), cshape, "batch_norm running_mean");
  require_same_shape(running_var.shape(), cshape, "batch_norm running_var");
  const double count = static_cast<double>(batch * sp);
  if (count == 0) throw DimensionError("batch_norm: zero-size batch");

  auto xv = x.value().data();
  std::vector<double> mean(ch), inv_std(ch);
  if (mode == BnMode::kTrain) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < sp; ++p) s += xv[(b * ch + c) * sp + p];
      const double mu = s / count;
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < sp; ++p) {
          const double d = xv[(b * ch + c) * sp + p] - mu;
          v += d * d;
        }
      v /= count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(v + opts.eps);
      running_mean[c] = (1.0 - opts.momentum) * running_mean[c] + opts.momentum * mu;
      running_var[c] = (1.0 - opts.momentum) * running_var[c] + opts.momentum * v;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + opts.eps);
    }
  }

  Tensor xhat(xs);
  Tensor out(xs);
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t p = 0; p < sp; ++p) {
        const std::size_t i = (b * ch + c) * sp + p;
        xhat[i] = (xv[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  const bool train = mode == BnMode::kTrain;
  auto xhat_ptr = std::make_shared<Tensor>(std::move(xhat));
  return x.tape().record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [gamma, xhat_ptr, inv_std, batch, ch, sp, count, train](const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& xh = *xhat_ptr;
        auto gam = gamma.value().data();
        for (std::size_t c = 0; c < ch; ++c) {
          double sg = 0.0, sgx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < sp; ++p) {
              const std::size_t i = (b * ch + c) * sp + p;
              sg += g[i];
              sgx += g[i] * xh[i];
            }
          if (gi[1]) (*gi[1])[c] += sgx;
          if (gi[2]) (*gi[2])[c] += sg;
          if (!gi[0]) continue;
          const double k = gam[c] * inv_std[c];
          const double mg = sg / count, mgx = sgx / count;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < sp; ++p) {
              const std::size_t i = (b * ch + c) * sp + p;
              (*gi[0])[i] += train ? k * (g[i] - mg - xh[i] * mgx) : k * g[i];
            }
        }
      });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record("relu", std::move(out), {x}, [x](const Tensor& g, std::span<Tensor* const> gi) {
    auto d = gi[0]->data();
    auto xv = x.value().data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0) d[i] += g[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record("sigmoid", std::move(out), {x}, [y](const Tensor& g, std::span<Tensor* const> gi) {
    auto d = gi[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

Var softmax(Var x) {
  const std::size_t c = x.shape().back(), rows = x.value().size() / c;
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= s;
  }
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record("softmax", std::move(out), {x}, [y, rows, c](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * (*y)[r * c + j];
      for (std::size_t j = 0; j < c; ++j) (*gi[0])[r * c + j] += (*y)[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

Var mse_loss(Var a, Var target) {
  require_same_shape(a.shape(), target.shape(), "mse_loss");
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - target.value()[i];
    s += d * d;
  }
  return a.tape().record("mse_loss", Tensor::scalar(s / n), {a, target},
                         [a, target, n](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < a.value().size(); ++i) {
                             const double d = 2.0 * (a.value()[i] - target.value()[i]) / n * g[0];
                             if (gi[0]) (*gi[0])[i] += d;
                             if (gi[1]) (*gi[1])[i] -= d;
                           }
                         });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(s) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = s[0], c = s[1];
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(c) + ")");
    }
  }
  auto probs = std::make_shared<Tensor>(Shape{batch, c});
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.value().data().data() + b * c;
    const std::size_t top = static_cast<std::size_t>(std::max_element(z, z + c) - z);
    double rest = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (j != top) rest += std::exp(z[j] - z[top]);
    // log-sum-exp split as max + log1p(rest) keeps tiny losses accurate.
    const double tail = std::log1p(rest);
    const double lse = z[top] + tail;
    total += (z[top] - z[labels[b]]) + tail;
    for (std::size_t j = 0; j < c; ++j) (*probs)[b * c + j] = std::exp(z[j] - lse);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().record("cross_entropy", Tensor::scalar(total / static_cast<double>(batch)), {logits},
                              [probs, lab, batch, c](const Tensor& g, std::span<Tensor* const> gi) {
                                const double k = g[0] / static_cast<double>(batch);
                                for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t j = 0; j < c; ++j) {
                                    const double onehot = static_cast<int>(j) == lab[b] ? 1.0 : 0.0;
                                    (*gi[0])[b * c + j] += k * ((*probs)[b * c + j] - onehot);
                                  }
                              });
}

Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w) {
  const Shape xs = x.shape();
  Tensor out = resample2d(x.value(), out_h, out_w, ResampleMode::kNearest);
  const std::size_t h = xs[xs.size() - 2], w = xs[xs.size() - 1];
  const std::size_t planes = x.value().size() / (h * w);
  return x.tape().record("upsample_nearest", std::move(out), {x},
                         [planes, h, w, out_h, out_w](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t p = 0; p < planes; ++p)
                             for (std::size_t oy = 0; oy < out_h; ++oy)
                               for (std::size_t ox = 0; ox < out_w; ++ox)
                                 (*gi[0])[(p * h + oy * h / out_h) * w + ox * w / out_w] +=
                                     g[(p * out_h + oy) * out_w + ox];
                         });
}

Var to_nodes(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("to_nodes: expected B x C x H x W, got " + shape_str(s));
  const std::size_t batch = s[0], c = s[1], n = s[2] * s[3];
  Tensor out({batch, n, c});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < n; ++i) out[(b * n + i) * c + ch] = x.value()[(b * c + ch) * n + i];
  return x.tape().record("to_nodes", std::move(out), {x}, [batch, c, n](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) (*gi[0])[(b * c + ch) * n + i] += g[(b * n + i) * c + ch];
  });
}

Var to_grid(Var x, std::size_t h, std::size_t w) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] != h * w) {
    throw DimensionError("to_grid: " + shape_str(s) + " cannot form a " + std::to_string(h) + "x" + std::to_string(w) +
                         " grid");
  }
  const std::size_t batch = s[0], n = s[1], c = s[2];
  Tensor out({batch, c, h, w});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < n; ++i) out[(b * c + ch) * n + i] = x.value()[(b * n + i) * c + ch];
  return x.tape().record("to_grid", std::move(out), {x}, [batch, c, n](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) (*gi[0])[(b * n + i) * c + ch] += g[(b * c + ch) * n + i];
  });
}

Var mean_nodes(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw DimensionError("mean_nodes: expected B x N x C, got " + shape_str(s));
  const std::size_t batch = s[0], n = s[1], c = s[2];
  Tensor out({batch, c});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += x.value()[(b * n + i) * c + ch];
  for (double& v : out.data()) v /= static_cast<double>(n);
  return x.tape().record("mean_nodes", std::move(out), {x}, [batch, n, c](const Tensor& g, std::span<Tensor* const> gi) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) (*gi[0])[(b * n + i) * c + ch] += g[b * c + ch] * inv;
  });
}

Var global_avg_pool(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("global_avg_pool: expected B x C x H x W, got " + shape_str(s));
  const std::size_t planes = s[0] * s[1], sp = s[2] * s[3];
  Tensor out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sp; ++i) acc += x.value()[p * sp + i];
    out[p] = acc / static_cast<double>(sp);
  }
  return x.tape().record("global_avg_pool", std::move(out), {x},
                         [planes, sp](const Tensor& g, std::span<Tensor* const> gi) {
                           const double inv = 1.0 / static_cast<double>(sp);
                           for (std::size_t p = 0; p < planes; ++p)
                             for (std::size_t i = 0; i < sp; ++i) (*gi[0])[p * sp + i] += g[p] * inv;
                         });
}

Var max_relative_gc(Var x, std::span<const NeighborGraph> graphs) {
  const Shape& s = x.shape();
  const bool flat = s.size() == 2;
  if (!flat && s.size() != 3) throw DimensionError("max_relative_gc: expected (B x) N x C, got " + shape_str(s));
  const std::size_t batch = flat ? 1 : s[0], n = s[s.size() - 2], c = s.back();
  if (graphs.size() != batch) {
    throw DimensionError("max_relative_gc: " + std::to_string(graphs.size()) + " graphs for batch " +
                         std::to_string(batch));
  }
  for (const auto& g : graphs) {
    if (g.num_nodes != n) throw DimensionError("max_relative_gc: graph node count does not match features");
    if (g.k == 0) throw DimensionError("max_relative_gc: empty neighbor row");
    for (auto j : g.neighbors)
      if (j >= n) throw DimensionError("max_relative_gc: neighbor index out of range");
  }
  Shape out_shape = s;
  out_shape.back() = 2 * c;
  Tensor out(out_shape);
  auto arg = std::make_shared<std::vector<std::size_t>>(batch * n * c);
  const auto xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const NeighborGraph& g = graphs[b];
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = xv.data() + (b * n + i) * c;
      double* o = out.data().data() + (b * n + i) * 2 * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        o[ch] = xi[ch];
        std::size_t best_j = g.at(i, 0);
        double best = xv[(b * n + best_j) * c + ch] - xi[ch];
        for (std::size_t r = 1; r < g.k; ++r) {
          const std::size_t j = g.at(i, r);
          const double d = xv[(b * n + j) * c + ch] - xi[ch];
          if (d > best) {
            best = d;
            best_j = j;
          }
        }
        o[c + ch] = best;
        (*arg)[(b * n + i) * c + ch] = best_j;
      }
    }
  }
  return x.tape().record("max_relative_gc", std::move(out), {x},
                         [arg, batch, n, c](const Tensor& g, std::span<Tensor* const> gi) {
                           auto d = gi[0]->data();
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                 const double gid = g[(b * n + i) * 2 * c + ch];
                                 const double grel = g[(b * n + i) * 2 * c + c + ch];
                                 const std::size_t j = (*arg)[(b * n + i) * c + ch];
                                 d[(b * n + i) * c + ch] += gid - grel;
                                 d[(b * n + j) * c + ch] += grel;
                               }
                         });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

}  // namespace gdvig
