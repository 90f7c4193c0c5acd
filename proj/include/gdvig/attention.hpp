#pragma once

#include <filesystem>
#include <vector>

#include "gdvig/train.hpp"

namespace gdvig {

/// Grad-CAM from last-stage node features (B x N x C on a grid_h x grid_w grid)
/// and their gradient: channel weights are node-averaged gradients, the map is
/// the ReLU of the weighted channel sum, upsampled (nearest) to out_h x out_w and
/// min-max scaled per sample. A flat map comes back all zero. Returns B x out_h x out_w.
Tensor grad_cam(const Tensor& features, const Tensor& grad, std::size_t grid_h, std::size_t grid_w,
                std::size_t out_h, std::size_t out_w);

struct AttentionResult {
  Tensor heatmaps;  // B x H x W
  std::vector<int> predicted;
};

/// Heatmaps for the predicted class of each record (inference mode).
AttentionResult attention_maps(GdVig& model, const TrainConfig& tc, std::span<const SampleRecord* const> records);

/// True when some pixel attaining the heatmap maximum lies inside the mask.
bool argmax_inside(const Tensor& heatmap, const Tensor& mask);

/// 8-bit binary PGM of an H x W map in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& map);

}  // namespace gdvig
