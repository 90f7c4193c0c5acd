#pragma once

#include <string>
#include <vector>

#include "gdvig/blocks.hpp"

namespace gdvig {

/// The three generator arms of the ablation: convolutions only, graph blocks
/// with a plain upsampling decoder, and graph encoder + CNN decoder.
enum class GmgVariant { kCnnOnly, kGnnOnly, kGnnPlusCnn };

GmgVariant parse_gmg_variant(const std::string& s);
std::string to_string(GmgVariant v);

struct GmgConfig {
  GmgVariant variant = GmgVariant::kGnnPlusCnn;
  std::size_t encoder_depth = 2;  // grapher+ffn pairs per resolution
  std::size_t base_channels = 48;
  std::size_t k = 9;
  bool knn_normalize = false;  // unit-length node features before KNN
};

/// One encoder step: a grapher+ffn pair, or a cnn block in the cnn_only arm.
struct EncoderBlock {
  GrapherParams grapher;
  FfnParams ffn;
  CnnBlockParams cnn;
};

struct GmgParams {
  GmgConfig cfg;
  StemParams stem;
  std::vector<EncoderBlock> enc4;  // H/4, C channels
  ConvBnRelu transition;           // H/4 -> H/8, C -> 2C
  std::vector<EncoderBlock> enc8;  // H/8, 2C channels
  // Decoder, coarse to fine. up_k projects the upsampled map to the next
  // width, skip_k is the 1x1 channel match on the encoder feature added to it.
  CnnBlockParams dec8, dec4, dec2, dec1;
  ConvParams up4, up2, up1;
  ConvParams skip4, skip2, skip1;
  ConvParams head;

  /// Registers parameters under "gmg.". When `shared_stem` is given it is
  /// reused instead of creating a private stem.
  static GmgParams create(ParamStore& store, const GmgConfig& cfg, Rng& rng, const StemParams* shared_stem = nullptr);
};

/// Gaze map in [0,1], B x 1 x H x W.
Var gmg_forward(const Context& ctx, Var image, const GmgParams& p);
/// Same, reusing an already computed stem output for `image`.
Var gmg_forward_from_stem(const Context& ctx, Var image, const StemOutput& s, const GmgParams& p);

/// Mean squared error between generated and ground-truth maps.
Var gmg_loss(Var gm, Var gm_hat);

}  // namespace gdvig
