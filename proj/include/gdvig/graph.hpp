#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gdvig/tensor.hpp"

namespace gdvig {

/// Feature-grid nodes: features is N x C with node i at cell (i / grid_w, i % grid_w).
struct NodeGrid {
  Tensor features;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  NodeGrid(Tensor features, std::size_t grid_h, std::size_t grid_w);
  std::size_t num_nodes() const { return features.dim(0); }
  std::size_t channels() const { return features.dim(1); }
};

/// Per-node gaze values in [0,1], aligned with NodeGrid indexing.
struct GazeGrid {
  Tensor values;

  explicit GazeGrid(Tensor values);
  std::size_t size() const { return values.size(); }
};

/// K directed neighbors per center, row-major N x K, self excluded.
struct NeighborGraph {
  std::size_t num_nodes = 0;
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;

  std::size_t at(std::size_t center, std::size_t r) const { return neighbors[center * k + r]; }
  bool operator==(const NeighborGraph&) const = default;
};

struct GraphConfig {
  std::size_t k = 9;
  double lambda_g = 3.0;
  bool use_gaze = true;
};

/// ||x_i - x_j||^2 over the feature channels.
double feature_distance(const NodeGrid& nodes, std::size_t i, std::size_t j);

/// ||x_i - x_j||^2 + lambda_g * (gm_i - gm_j)^2 * gm_i. Asymmetric: the trailing
/// factor is the center's gaze value.
double fused_distance(const NodeGrid& nodes, const GazeGrid& gaze, std::size_t i, std::size_t j, double lambda_g);

/// The lambda_g gaze term alone.
double gaze_distance(const GazeGrid& gaze, std::size_t i, std::size_t j, double lambda_g);

/// K nearest other nodes per center under the feature (or fused) distance,
/// ties broken by ascending node index.
NeighborGraph knn_build(const NodeGrid& nodes, const std::optional<GazeGrid>& gaze, const GraphConfig& cfg);

/// Same contract as knn_build, computed by the serial reference kernel.
NeighborGraph knn_build_serial(const NodeGrid& nodes, const std::optional<GazeGrid>& gaze, const GraphConfig& cfg);

/// Node grid for batch element b of a B x N x C node tensor laid out on an
/// h x w grid. With l2_normalize each node's feature vector is scaled to unit
/// length (zero vectors stay zero).
NodeGrid node_grid_from_batch(const Tensor& nodes, std::size_t b, std::size_t h, std::size_t w, bool l2_normalize);

/// Area-average a gaze map (H x W, or 1 x H x W) onto a grid_h x grid_w grid.
GazeGrid downsample_gaze(const Tensor& gaze_map, std::size_t grid_h, std::size_t grid_w);

/// Throws unless every row has k distinct in-range indices excluding the center.
void validate_graph(const NeighborGraph& g);

/// `# lambda_g=<v> k=<K> grid=<h>x<w>` header then `center: n1,n2,...` lines.
void write_graph_dump(std::ostream& out, const NeighborGraph& g, double lambda_g, std::size_t grid_h,
                      std::size_t grid_w);
struct GraphDump {
  NeighborGraph graph;
  double lambda_g = 0.0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};
GraphDump read_graph_dump(std::istream& in);

}  // namespace gdvig
