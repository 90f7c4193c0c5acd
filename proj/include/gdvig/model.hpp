#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "gdvig/config.hpp"
#include "gdvig/gdc.hpp"
#include "gdvig/gmg.hpp"

namespace gdvig {

/// Generator and classifier with their parameters. With share_stem both subnets
/// read the same stem, which is where classification gradients reach the generator.
struct GdVig {
  ModelConfig cfg;
  ParamStore params;
  GmgParams gmg;
  GdcParams gdc;

  static GdVig create(const ModelConfig& cfg, std::uint64_t seed);
};

GmgConfig gmg_config(const ModelConfig& m);
GdcConfig gdc_config(const ModelConfig& m);

struct ForwardOptions {
  bool use_gmg = true;
  bool detach_gmg = false;
  /// Ground-truth gaze (B x 1 x H x W) to steer the graphs instead of the generated map.
  std::optional<Tensor> steer_gaze;
};

struct ForwardResult {
  std::optional<Var> gaze;  // generated map, B x 1 x H x W
  GdcOutput gdc;
};

ForwardResult forward(const Context& ctx, const GdVig& model, Var image, const ForwardOptions& opts);

struct JointLoss {
  Var total;
  std::optional<Var> gmg;
  Var gdc;
};

/// L = L_GMG + lambda_c * L_GDC.
JointLoss joint_loss(Var gm, Var gm_hat, Var logits, std::span<const int> labels, double lambda_c);
/// Classifier-only objective lambda_c * L_GDC.
JointLoss classifier_loss(Var logits, std::span<const int> labels, double lambda_c);

/// Checkpoint directory: config.txt plus the parameter manifest and tensors.
void save_checkpoint(const std::filesystem::path& dir, const GdVig& model, const RunConfig& cfg);
struct LoadedCheckpoint {
  RunConfig cfg;
  GdVig model;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace gdvig
