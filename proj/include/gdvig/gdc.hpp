#pragma once

#include <optional>
#include <vector>

#include "gdvig/blocks.hpp"

namespace gdvig {

struct GdcStage {
  std::size_t depth = 2;
  std::size_t channels = 48;
};

struct GdcConfig {
  std::size_t num_classes = 2;
  std::vector<GdcStage> stages{{2, 48}, {2, 96}};  // each later stage halves the grid
  std::size_t k = 9;
  double lambda_g = 3.0;
  bool knn_normalize = false;
};

struct GdcStageParams {
  std::optional<ConvBnRelu> transition;  // stride-2 conv into this stage (all but the first)
  std::vector<GrapherParams> graphers;
  std::vector<FfnParams> ffns;
};

struct GdcParams {
  GdcConfig cfg;
  StemParams stem;
  std::vector<GdcStageParams> stages;
  LinearParams head;

  static GdcParams create(ParamStore& store, const GdcConfig& cfg, Rng& rng, const StemParams* shared_stem = nullptr);
};

struct GdcOutput {
  Var logits;    // B x c
  Var features;  // last-stage node features, B x N x C
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  /// Graphs built for every grapher block, [block][batch].
  std::vector<std::vector<NeighborGraph>> graphs;
};

/// KNN under the fused feature+gaze distance.
NeighborGraph gdgc(const NodeGrid& nodes, const GazeGrid& gaze, const GdcConfig& cfg);

/// `gaze_map` (B x 1 x H x W, or nullopt for the plain feature-distance graph)
/// only steers neighbor selection; no gradient flows through it.
GdcOutput gdc_forward(const Context& ctx, Var image, const std::optional<Tensor>& gaze_map, const GdcParams& p);
GdcOutput gdc_forward_from_stem(const Context& ctx, Var stem_out, const std::optional<Tensor>& gaze_map,
                                const GdcParams& p);

}  // namespace gdvig
