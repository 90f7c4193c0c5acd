#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "gdvig/train.hpp"

namespace gdvig {

struct EdgeRecord {
  std::size_t neighbor = 0;
  double feature = 0;  // ||x_i - x_j||^2
  double gaze = 0;     // lambda_g * (gm_i - gm_j)^2 * gm_i
  double fused = 0;
};

struct CenterReport {
  std::size_t center = 0;
  double gaze_value = 0;
  std::vector<EdgeRecord> feature_edges;
  std::vector<EdgeRecord> gaze_edges;
  std::vector<EdgeRecord> fused_edges;
  std::vector<std::size_t> eliminated;  // feature neighbors dropped by fusion
  std::vector<std::size_t> retained;    // feature neighbors kept by fusion
  std::vector<std::size_t> added;       // fused neighbors absent from the feature graph
};

struct GraphReport {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t k = 0;
  double lambda_g = 0;
  NeighborGraph feature;
  NeighborGraph gaze_only;
  NeighborGraph fused;
  std::vector<CenterReport> centers;
};

/// Feature-only, gaze-only and fused KNN graphs over one node grid, with
/// per-center neighbor sets and the distance terms of every listed edge.
GraphReport analyze_graphs(const NodeGrid& nodes, const GazeGrid& gaze, std::size_t k, double lambda_g,
                           std::span<const std::size_t> centers);

/// Same analysis on the nodes entering the classifier's first graph block for
/// one record, steered by the generated gaze map (the record's own map when the
/// model was trained without the generator).
GraphReport dump_graphs(GdVig& model, const TrainConfig& tc, const SampleRecord& record,
                        std::span<const std::size_t> centers);

/// feature.graph, gaze.graph, fused.graph and report.json.
void write_graph_report(const std::filesystem::path& dir, const GraphReport& r);

}  // namespace gdvig
