#include "gdvig/graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "gdvig/error.hpp"
#include "gdvig/image.hpp"
#include "gdvig/kernels.hpp"

namespace gdvig {

NodeGrid::NodeGrid(Tensor f, std::size_t h, std::size_t w) : features(std::move(f)), grid_h(h), grid_w(w) {
  if (features.rank() != 2) throw DimensionError("NodeGrid features must be N x C, got " + shape_str(features.shape()));
  if (features.dim(0) != grid_h * grid_w) {
    throw DimensionError("NodeGrid: " + std::to_string(features.dim(0)) + " nodes for a " + std::to_string(grid_h) +
                         "x" + std::to_string(grid_w) + " grid");
  }
}

GazeGrid::GazeGrid(Tensor v) : values(std::move(v)) {
  for (double g : values.data()) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gaze value outside [0,1]: " + std::to_string(g));
  }
}

double feature_distance(const NodeGrid& nodes, std::size_t i, std::size_t j) {
  const std::size_t c = nodes.channels();
  const double* x = nodes.features.data().data();
  return kernels::pair_distance(x + i * c, x + j * c, c, nullptr, i, j, 0.0);
}

double fused_distance(const NodeGrid& nodes, const GazeGrid& gaze, std::size_t i, std::size_t j, double lambda_g) {
  const std::size_t c = nodes.channels();
  const double* x = nodes.features.data().data();
  return kernels::pair_distance(x + i * c, x + j * c, c, gaze.values.data().data(), i, j, lambda_g);
}

double gaze_distance(const GazeGrid& gaze, std::size_t i, std::size_t j, double lambda_g) {
  const double dg = gaze.values[i] - gaze.values[j];
  return lambda_g * (dg * dg) * gaze.values[i];
}

namespace {

template <typename Select>
NeighborGraph knn_with(const NodeGrid& nodes, const std::optional<GazeGrid>& gaze, const GraphConfig& cfg,
                       Select select) {
  const std::size_t n = nodes.num_nodes();
  if (cfg.k < 1 || cfg.k >= n) {
    throw ConfigError("knn: k=" + std::to_string(cfg.k) + " must satisfy 1 <= k < N=" + std::to_string(n));
  }
  if (cfg.lambda_g < 0.0) throw ConfigError("knn: lambda_g must be >= 0");
  std::span<const double> g;
  if (cfg.use_gaze) {
    if (!gaze) throw ConfigError("knn: use_gaze set but no gaze grid given");
    if (gaze->size() != n) {
      throw DimensionError("knn: gaze grid has " + std::to_string(gaze->size()) + " cells for " + std::to_string(n) +
                           " nodes");
    }
    g = gaze->values.data();
  }
  NeighborGraph out{n, cfg.k, std::vector<std::size_t>(n * cfg.k)};
  select(nodes.features.data(), n, nodes.channels(), g, cfg.lambda_g, cfg.k, std::span<std::size_t>(out.neighbors));
  return out;
}

}  // namespace

NeighborGraph knn_build(const NodeGrid& nodes, const std::optional<GazeGrid>& gaze, const GraphConfig& cfg) {
  return knn_with(nodes, gaze, cfg, kernels::omp::knn_select);
}

NeighborGraph knn_build_serial(const NodeGrid& nodes, const std::optional<GazeGrid>& gaze, const GraphConfig& cfg) {
  return knn_with(nodes, gaze, cfg, kernels::serial::knn_select);
}

NodeGrid node_grid_from_batch(const Tensor& nodes, std::size_t b, std::size_t h, std::size_t w, bool l2_normalize) {
  if (nodes.rank() != 3 || nodes.dim(1) != h * w || b >= nodes.dim(0)) {
    throw DimensionError("node_grid_from_batch: " + shape_str(nodes.shape()) + " vs grid " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  const std::size_t n = nodes.dim(1), c = nodes.dim(2);
  const auto src = nodes.data().subspan(b * n * c, n * c);
  std::vector<double> f(src.begin(), src.end());
  if (l2_normalize) {
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) norm += f[i * c + ch] * f[i * c + ch];
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (std::size_t ch = 0; ch < c; ++ch) f[i * c + ch] /= norm;
    }
  }
  return NodeGrid(Tensor({n, c}, std::move(f)), h, w);
}

GazeGrid downsample_gaze(const Tensor& gaze_map, std::size_t grid_h, std::size_t grid_w) {
  const Tensor map = gaze_map.rank() == 3 && gaze_map.dim(0) == 1
                         ? gaze_map.reshaped({gaze_map.dim(1), gaze_map.dim(2)})
                         : gaze_map;
  if (map.rank() != 2) throw DimensionError("downsample_gaze: expected H x W map, got " + shape_str(gaze_map.shape()));
  if (grid_h == 0 || grid_w == 0 || map.dim(0) % grid_h != 0 || map.dim(1) % grid_w != 0) {
    throw ConfigError("downsample_gaze: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " does not divide map " + shape_str(map.shape()));
  }
  Tensor pooled = resample2d(map, grid_h, grid_w, ResampleMode::kArea);
  // Averages of [0,1] values can land a rounding step outside the interval.
  for (double& v : pooled.data()) v = std::min(1.0, std::max(0.0, v));
  return GazeGrid(pooled.reshaped({grid_h * grid_w}));
}

void validate_graph(const NeighborGraph& g) {
  if (g.neighbors.size() != g.num_nodes * g.k) throw DimensionError("NeighborGraph: row storage mismatch");
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    std::unordered_set<std::size_t> seen;
    for (std::size_t r = 0; r < g.k; ++r) {
      const std::size_t j = g.at(i, r);
      if (j >= g.num_nodes) throw DimensionError("NeighborGraph: index out of range in row " + std::to_string(i));
      if (j == i) throw DimensionError("NeighborGraph: self loop in row " + std::to_string(i));
      if (!seen.insert(j).second) throw DimensionError("NeighborGraph: duplicate neighbor in row " + std::to_string(i));
    }
  }
}

void write_graph_dump(std::ostream& out, const NeighborGraph& g, double lambda_g, std::size_t grid_h,
                      std::size_t grid_w) {
  std::ostringstream lam;
  lam.precision(17);
  lam << lambda_g;
  out << "# lambda_g=" << lam.str() << " k=" << g.k << " grid=" << grid_h << "x" << grid_w << "\n";
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    out << i << ":";
    for (std::size_t r = 0; r < g.k; ++r) out << (r ? "," : " ") << g.at(i, r);
    out << "\n";
  }
}

GraphDump read_graph_dump(std::istream& in) {
  GraphDump dump;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("graph dump: empty input");
  char x = 0;
  std::istringstream hs(line);
  std::string hash, lam, kk, grid;
  hs >> hash >> lam >> kk >> grid;
  if (hash != "#" || lam.rfind("lambda_g=", 0) != 0 || kk.rfind("k=", 0) != 0 || grid.rfind("grid=", 0) != 0) {
    throw FormatError("graph dump: bad header '" + line + "'");
  }
  dump.lambda_g = std::stod(lam.substr(9));
  dump.graph.k = std::stoul(kk.substr(2));
  std::istringstream gs(grid.substr(5));
  gs >> dump.grid_h >> x >> dump.grid_w;
  if (x != 'x') throw FormatError("graph dump: bad grid '" + grid + "'");
  dump.graph.num_nodes = dump.grid_h * dump.grid_w;
  for (std::size_t i = 0; i < dump.graph.num_nodes; ++i) {
    if (!std::getline(in, line)) throw FormatError("graph dump: missing row " + std::to_string(i));
    const auto colon = line.find(':');
    if (colon == std::string::npos || std::stoul(line.substr(0, colon)) != i) {
      throw FormatError("graph dump: bad row '" + line + "'");
    }
    std::istringstream rs(line.substr(colon + 1));
    std::string item;
    std::size_t count = 0;
    while (std::getline(rs, item, ',')) {
      dump.graph.neighbors.push_back(std::stoul(item));
      ++count;
    }
    if (count != dump.graph.k) throw FormatError("graph dump: row " + std::to_string(i) + " has wrong neighbor count");
  }
  return dump;
}

}  // namespace gdvig
