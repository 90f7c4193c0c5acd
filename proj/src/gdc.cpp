#include "gdvig/gdc.hpp"

#include "gdvig/error.hpp"

namespace gdvig {

GdcParams GdcParams::create(ParamStore& store, const GdcConfig& cfg, Rng& rng, const StemParams* shared_stem) {
  if (cfg.num_classes < 2) throw ConfigError("gdc: num_classes must be >= 2");
  if (cfg.stages.empty()) throw ConfigError("gdc: at least one stage required");
  GdcParams p;
  p.cfg = cfg;
  p.stem = shared_stem ? *shared_stem : StemParams::create(store, "gdc.stem", cfg.stages.front().channels, rng);
  std::size_t prev = cfg.stages.front().channels;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    if (st.depth == 0) throw ConfigError("gdc: stage depth must be >= 1");
    const std::string name = "gdc.stage" + std::to_string(s);
    GdcStageParams sp;
    if (s > 0) sp.transition = ConvBnRelu::create(store, name + ".transition", prev, st.channels, 2, rng);
    for (std::size_t d = 0; d < st.depth; ++d) {
      sp.graphers.push_back(GrapherParams::create(store, name + "." + std::to_string(d) + ".grapher", st.channels, rng));
      sp.ffns.push_back(FfnParams::create(store, name + "." + std::to_string(d) + ".ffn", st.channels, rng));
    }
    p.stages.push_back(std::move(sp));
    prev = st.channels;
  }
  p.head = LinearParams::create(store, "gdc.head", prev, cfg.num_classes, rng);
  return p;
}

NeighborGraph gdgc(const NodeGrid& nodes, const GazeGrid& gaze, const GdcConfig& cfg) {
  return knn_build(nodes, gaze, GraphConfig{cfg.k, cfg.lambda_g, true});
}

GdcOutput gdc_forward(const Context& ctx, Var image, const std::optional<Tensor>& gaze_map, const GdcParams& p) {
  return gdc_forward_from_stem(ctx, stem(ctx, image, p.stem).quarter, gaze_map, p);
}

GdcOutput gdc_forward_from_stem(const Context& ctx, Var stem_out, const std::optional<Tensor>& gaze_map,
                                const GdcParams& p) {
  const std::size_t batch = stem_out.shape()[0];
  if (gaze_map && (gaze_map->rank() != 4 || gaze_map->dim(0) != batch || gaze_map->dim(1) != 1)) {
    throw DimensionError("gdc: gaze map " + shape_str(gaze_map->shape()) + " does not match batch " +
                         std::to_string(batch));
  }
  if (stem_out.shape()[1] != p.cfg.stages.front().channels) {
    throw DimensionError("gdc: stem output " + shape_str(stem_out.shape()) + " does not match first stage channels");
  }
  GdcOutput out;
  Var x = stem_out;
  Var nodes;
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    const GdcStageParams& sp = p.stages[s];
    if (sp.transition) x = (*sp.transition)(ctx, x);
    const std::size_t h = x.shape()[2], w = x.shape()[3];
    std::vector<GazeGrid> grids;
    if (gaze_map) {
      const std::size_t gh = gaze_map->dim(2), gw = gaze_map->dim(3);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto plane = gaze_map->data().subspan(b * gh * gw, gh * gw);
        grids.push_back(downsample_gaze(Tensor({gh, gw}, std::vector<double>(plane.begin(), plane.end())), h, w));
      }
    }
    nodes = to_nodes(x);
    for (std::size_t d = 0; d < sp.graphers.size(); ++d) {
      std::vector<NeighborGraph> graphs;
      for (std::size_t b = 0; b < batch; ++b) {
        NodeGrid grid = node_grid_from_batch(nodes.value(), b, h, w, p.cfg.knn_normalize);
        graphs.push_back(gaze_map ? gdgc(grid, grids[b], p.cfg)
                                  : knn_build(grid, std::nullopt, GraphConfig{p.cfg.k, 0.0, false}));
      }
      nodes = ffn_block(ctx, grapher_block(ctx, nodes, graphs, sp.graphers[d]), sp.ffns[d]);
      out.graphs.push_back(std::move(graphs));
    }
    out.grid_h = h;
    out.grid_w = w;
    if (s + 1 < p.stages.size()) x = to_grid(nodes, h, w);
  }
  out.features = nodes;
  out.logits = p.head(ctx, mean_nodes(nodes));
  return out;
}

}  // namespace gdvig
