#include "gdvig/graph_dump.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "gdvig/error.hpp"

namespace gdvig {
namespace {

std::vector<EdgeRecord> edges(const NodeGrid& nodes, const GazeGrid& gaze, const NeighborGraph& g, std::size_t i,
                              double lambda_g) {
  std::vector<EdgeRecord> out;
  for (std::size_t r = 0; r < g.k; ++r) {
    const std::size_t j = g.at(i, r);
    out.push_back(EdgeRecord{j, feature_distance(nodes, i, j), gaze_distance(gaze, i, j, lambda_g),
                             fused_distance(nodes, gaze, i, j, lambda_g)});
  }
  return out;
}

std::vector<std::size_t> row(const NeighborGraph& g, std::size_t i) {
  std::vector<std::size_t> r(g.neighbors.begin() + static_cast<long>(i * g.k),
                             g.neighbors.begin() + static_cast<long>((i + 1) * g.k));
  std::sort(r.begin(), r.end());
  return r;
}

nlohmann::json edges_json(const std::vector<EdgeRecord>& es) {
  auto arr = nlohmann::json::array();
  for (const auto& e : es) {
    arr.push_back({{"neighbor", e.neighbor}, {"feature", e.feature}, {"gaze", e.gaze}, {"fused", e.fused}});
  }
  return arr;
}

}  // namespace

GraphReport analyze_graphs(const NodeGrid& nodes, const GazeGrid& gaze, std::size_t k, double lambda_g,
                           std::span<const std::size_t> centers) {
  if (gaze.size() != nodes.num_nodes()) throw DimensionError("analyze_graphs: gaze grid size differs from node count");
  GraphReport r;
  r.grid_h = nodes.grid_h;
  r.grid_w = nodes.grid_w;
  r.k = k;
  r.lambda_g = lambda_g;
  r.feature = knn_build(nodes, std::nullopt, GraphConfig{k, 0.0, false});
  r.fused = knn_build(nodes, gaze, GraphConfig{k, lambda_g, true});
  // With all features equal the fused distance reduces to its gaze term.
  const NodeGrid flat(Tensor(nodes.features.shape()), nodes.grid_h, nodes.grid_w);
  r.gaze_only = knn_build(flat, gaze, GraphConfig{k, lambda_g, true});

  for (std::size_t i : centers) {
    if (i >= nodes.num_nodes()) {
      throw ConfigError("center " + std::to_string(i) + " outside " + std::to_string(nodes.num_nodes()) + " nodes");
    }
    CenterReport c;
    c.center = i;
    c.gaze_value = gaze.values[i];
    c.feature_edges = edges(nodes, gaze, r.feature, i, lambda_g);
    c.gaze_edges = edges(nodes, gaze, r.gaze_only, i, lambda_g);
    c.fused_edges = edges(nodes, gaze, r.fused, i, lambda_g);
    const auto f = row(r.feature, i), g = row(r.fused, i);
    std::set_difference(f.begin(), f.end(), g.begin(), g.end(), std::back_inserter(c.eliminated));
    std::set_intersection(f.begin(), f.end(), g.begin(), g.end(), std::back_inserter(c.retained));
    std::set_difference(g.begin(), g.end(), f.begin(), f.end(), std::back_inserter(c.added));
    r.centers.push_back(std::move(c));
  }
  return r;
}

GraphReport dump_graphs(GdVig& model, const TrainConfig& tc, const SampleRecord& record,
                        std::span<const std::size_t> centers) {
  validate_record(record, model.cfg.num_classes);
  const SampleRecord* one[] = {&record};
  const Batch b = make_batch(one, false);
  Tape tape;
  Context ctx{tape, model.params, BnMode::kInfer, BatchNormOptions{model.cfg.bn_momentum, model.cfg.bn_eps}};
  const Var image = tape.constant(b.images);
  const StemOutput s = stem(ctx, image, model.gdc.stem);
  Tensor gaze_map;
  if (tc.use_gmg) {
    ForwardOptions fo;
    fo.use_gmg = true;
    gaze_map = forward(ctx, model, image, fo).gaze->value();
  } else {
    gaze_map = record_gaze(record);
  }
  const Tensor& q = s.quarter.value();
  const std::size_t h = q.dim(2), w = q.dim(3);
  const NodeGrid nodes = node_grid_from_batch(to_nodes(s.quarter).value(), 0, h, w, model.cfg.knn_normalize);
  const std::size_t H = record.image.dim(1), W = record.image.dim(2);
  const GazeGrid gaze = downsample_gaze(gaze_map.reshaped({H, W}), h, w);
  return analyze_graphs(nodes, gaze, model.cfg.k, model.cfg.lambda_g, centers);
}

void write_graph_report(const std::filesystem::path& dir, const GraphReport& r) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* name, const NeighborGraph& g, double lambda_g) {
    std::ofstream out(dir / name, std::ios::trunc);
    write_graph_dump(out, g, lambda_g, r.grid_h, r.grid_w);
  };
  dump("feature.graph", r.feature, 0.0);
  dump("gaze.graph", r.gaze_only, r.lambda_g);
  dump("fused.graph", r.fused, r.lambda_g);

  nlohmann::json j;
  j["grid"] = {r.grid_h, r.grid_w};
  j["k"] = r.k;
  j["lambda_g"] = r.lambda_g;
  auto& cs = j["centers"] = nlohmann::json::array();
  for (const auto& c : r.centers) {
    cs.push_back({{"center", c.center},
                  {"gaze_value", c.gaze_value},
                  {"feature_edges", edges_json(c.feature_edges)},
                  {"gaze_edges", edges_json(c.gaze_edges)},
                  {"fused_edges", edges_json(c.fused_edges)},
                  {"eliminated", c.eliminated},
                  {"retained", c.retained},
                  {"added", c.added}});
  }
  std::ofstream out(dir / "report.json", std::ios::trunc);
  out << j.dump(1) << "\n";
}

}  // namespace gdvig
