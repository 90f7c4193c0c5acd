#include "gdvig/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gdvig/error.hpp"
#include "gdvig/image.hpp"

namespace gdvig {

Tensor grad_cam(const Tensor& features, const Tensor& grad, std::size_t grid_h, std::size_t grid_w,
                std::size_t out_h, std::size_t out_w) {
  require_same_shape(features.shape(), grad.shape(), "grad_cam");
  if (features.rank() != 3 || features.dim(1) != grid_h * grid_w) {
    throw DimensionError("grad_cam: features must be B x (grid_h*grid_w) x C, got " + shape_str(features.shape()));
  }
  const std::size_t batch = features.dim(0), n = features.dim(1), c = features.dim(2);
  Tensor cam({batch, grid_h, grid_w});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> alpha(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) alpha[ch] += grad[(b * n + i) * c + ch];
    for (double& a : alpha) a /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0;
      for (std::size_t ch = 0; ch < c; ++ch) v += alpha[ch] * features[(b * n + i) * c + ch];
      cam[b * n + i] = std::max(v, 0.0);
    }
  }
  Tensor up = resample2d(cam, out_h, out_w, ResampleMode::kNearest);
  const std::size_t hw = out_h * out_w;
  for (std::size_t b = 0; b < batch; ++b) {
    auto plane = up.data().subspan(b * hw, hw);
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double min = *lo, range = *hi - *lo;
    for (double& v : plane) v = range > 0 ? (v - min) / range : 0.0;
  }
  return up;
}

AttentionResult attention_maps(GdVig& model, const TrainConfig& tc, std::span<const SampleRecord* const> records) {
  const Batch b = make_batch(records, false);
  Tape tape;
  Context ctx{tape, model.params, BnMode::kInfer, BatchNormOptions{model.cfg.bn_momentum, model.cfg.bn_eps}};
  ForwardOptions fo;
  fo.use_gmg = tc.use_gmg;
  const ForwardResult f = forward(ctx, model, tape.constant(b.images), fo);
  const Tensor& logits = f.gdc.logits.value();
  AttentionResult r;
  r.predicted = argmax_rows(logits);
  // Inference-mode samples do not interact, so one seeded sweep serves the batch.
  Tensor seed(logits.shape());
  for (std::size_t i = 0; i < r.predicted.size(); ++i) seed[i * logits.dim(1) + r.predicted[i]] = 1.0;
  tape.backward(f.gdc.logits, seed);
  r.heatmaps = grad_cam(f.gdc.features.value(), tape.grad(f.gdc.features), f.gdc.grid_h, f.gdc.grid_w,
                        b.images.dim(2), b.images.dim(3));
  return r;
}

bool argmax_inside(const Tensor& heatmap, const Tensor& mask) {
  require_same_shape(heatmap.shape(), mask.shape(), "argmax_inside");
  const double top = heatmap.max();
  for (std::size_t i = 0; i < heatmap.size(); ++i)
    if (heatmap[i] == top && mask[i] > 0.5) return true;
  return false;
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("write_pgm: expected H x W, got " + shape_str(map.shape()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << map.dim(1) << " " << map.dim(0) << "\n255\n";
  for (double v : map.data()) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
}

}  // namespace gdvig
