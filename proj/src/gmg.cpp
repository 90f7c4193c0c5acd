#include "gdvig/gmg.hpp"

#include "gdvig/error.hpp"

namespace gdvig {

GmgVariant parse_gmg_variant(const std::string& s) {
  if (s == "cnn_only") return GmgVariant::kCnnOnly;
  if (s == "gnn_only") return GmgVariant::kGnnOnly;
  if (s == "gnn_plus_cnn") return GmgVariant::kGnnPlusCnn;
  throw ConfigError("unknown gmg variant '" + s + "' (expected cnn_only, gnn_only or gnn_plus_cnn)");
}

std::string to_string(GmgVariant v) {
  switch (v) {
    case GmgVariant::kCnnOnly:
      return "cnn_only";
    case GmgVariant::kGnnOnly:
      return "gnn_only";
    case GmgVariant::kGnnPlusCnn:
      return "gnn_plus_cnn";
  }
  return "?";
}

namespace {

std::vector<EncoderBlock> make_encoder(ParamStore& store, const std::string& name, const GmgConfig& cfg,
                                       std::size_t channels, Rng& rng) {
  std::vector<EncoderBlock> blocks(cfg.encoder_depth);
  for (std::size_t d = 0; d < cfg.encoder_depth; ++d) {
    const std::string n = name + "." + std::to_string(d);
    if (cfg.variant == GmgVariant::kCnnOnly) {
      blocks[d].cnn = CnnBlockParams::create(store, n + ".cnn", channels, rng);
    } else {
      blocks[d].grapher = GrapherParams::create(store, n + ".grapher", channels, rng);
      blocks[d].ffn = FfnParams::create(store, n + ".ffn", channels, rng);
    }
  }
  return blocks;
}

Var run_encoder(const Context& ctx, Var x, const std::vector<EncoderBlock>& blocks, const GmgConfig& cfg) {
  if (cfg.variant == GmgVariant::kCnnOnly) {
    for (const auto& b : blocks) x = cnn_block(ctx, x, b.cnn);
    return x;
  }
  const std::size_t batch = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
  Var nodes = to_nodes(x);
  const GraphConfig gcfg{cfg.k, 0.0, false};
  for (const auto& b : blocks) {
    std::vector<NeighborGraph> graphs;
    for (std::size_t i = 0; i < batch; ++i) {
      graphs.push_back(knn_build(node_grid_from_batch(nodes.value(), i, h, w, cfg.knn_normalize), std::nullopt, gcfg));
    }
    nodes = ffn_block(ctx, grapher_block(ctx, nodes, graphs, b.grapher), b.ffn);
  }
  return to_grid(nodes, h, w);
}

Var upsample2x(Var x) { return upsample_nearest(x, x.shape()[2] * 2, x.shape()[3] * 2); }

}  // namespace

GmgParams GmgParams::create(ParamStore& store, const GmgConfig& cfg, Rng& rng, const StemParams* shared_stem) {
  const std::size_t c = cfg.base_channels;
  if (c < 4 || c % 4 != 0) throw ConfigError("gmg: base_channels must be a positive multiple of 4");
  if (cfg.encoder_depth == 0) throw ConfigError("gmg: encoder_depth must be >= 1");
  GmgParams p;
  p.cfg = cfg;
  p.stem = shared_stem ? *shared_stem : StemParams::create(store, "gmg.stem", c, rng);
  p.enc4 = make_encoder(store, "gmg.enc4", cfg, c, rng);
  p.transition = ConvBnRelu::create(store, "gmg.transition", c, 2 * c, 2, rng);
  p.enc8 = make_encoder(store, "gmg.enc8", cfg, 2 * c, rng);
  const bool cnn_decoder = cfg.variant != GmgVariant::kGnnOnly;
  if (cnn_decoder) p.dec8 = CnnBlockParams::create(store, "gmg.dec8", 2 * c, rng);
  p.up4 = ConvParams::create(store, "gmg.up4", 2 * c, c, 1, 1, true, rng);
  p.skip4 = ConvParams::create(store, "gmg.skip4", c, c, 1, 1, true, rng);
  if (cnn_decoder) p.dec4 = CnnBlockParams::create(store, "gmg.dec4", c, rng);
  p.up2 = ConvParams::create(store, "gmg.up2", c, c / 2, 1, 1, true, rng);
  p.skip2 = ConvParams::create(store, "gmg.skip2", c / 2, c / 2, 1, 1, true, rng);
  if (cnn_decoder) p.dec2 = CnnBlockParams::create(store, "gmg.dec2", c / 2, rng);
  p.up1 = ConvParams::create(store, "gmg.up1", c / 2, c / 4, 1, 1, true, rng);
  p.skip1 = ConvParams::create(store, "gmg.skip1", 1, c / 4, 1, 1, true, rng);
  if (cnn_decoder) p.dec1 = CnnBlockParams::create(store, "gmg.dec1", c / 4, rng);
  p.head = ConvParams::create(store, "gmg.head", c / 4, 1, 1, 1, true, rng);
  return p;
}

Var gmg_forward(const Context& ctx, Var image, const GmgParams& p) {
  return gmg_forward_from_stem(ctx, image, stem(ctx, image, p.stem), p);
}

Var gmg_forward_from_stem(const Context& ctx, Var image, const StemOutput& s, const GmgParams& p) {
  const bool cnn_decoder = p.cfg.variant != GmgVariant::kGnnOnly;
  Var e4 = run_encoder(ctx, s.quarter, p.enc4, p.cfg);
  Var e8 = run_encoder(ctx, p.transition(ctx, e4), p.enc8, p.cfg);

  Var d = cnn_decoder ? cnn_block(ctx, e8, p.dec8) : e8;
  d = add(p.up4(ctx, upsample2x(d)), p.skip4(ctx, e4));
  if (cnn_decoder) d = cnn_block(ctx, d, p.dec4);
  d = add(p.up2(ctx, upsample2x(d)), p.skip2(ctx, s.half));
  if (cnn_decoder) d = cnn_block(ctx, d, p.dec2);
  d = add(p.up1(ctx, upsample2x(d)), p.skip1(ctx, image));
  if (cnn_decoder) d = cnn_block(ctx, d, p.dec1);
  return sigmoid(p.head(ctx, d));
}

Var gmg_loss(Var gm, Var gm_hat) { return mse_loss(gm, gm_hat); }

}  // namespace gdvig
