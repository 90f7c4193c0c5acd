#pragma once

#include <cstddef>
#include <span>

// Hot numeric loops in two flavours. `serial` holds straightforward reference
// loops kept for testing; `omp` holds the restructured OpenMP kernels used at
// runtime. Every omp kernel parallelizes over independent output rows and keeps
// each reduction in a fixed order, so results do not depend on thread count.

namespace gdvig::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t k = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
};

/// Squared feature distance plus the gaze term weighted by the center's gaze value.
inline double pair_distance(const double* xi, const double* xj, std::size_t channels, const double* gaze,
                            std::size_t i, std::size_t j, double lambda_g) {
  double d = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double diff = xi[c] - xj[c];
    d += diff * diff;
  }
  if (gaze != nullptr) {
    const double dg = gaze[i] - gaze[j];
    d += lambda_g * (dg * dg) * gaze[i];
  }
  return d;
}

namespace serial {

// C[M x N] = op(A) * op(B) (+ C when accumulate). op transposes when the flag is set;
// A is stored M x K (or K x M transposed), B is K x N (or N x K transposed).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> kernel,
                    std::span<double> out);
// Gradients are accumulated into dx / dkernel.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> dx);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dkernel);

// For each of n nodes, the k other nodes with smallest pair_distance, ties by index.
// gaze may be empty (feature distance only). neighbors is n x k row-major.
void knn_select(std::span<const double> features, std::size_t n, std::size_t channels, std::span<const double> gaze,
                double lambda_g, std::size_t k, std::span<std::size_t> neighbors);

}  // namespace serial

namespace omp {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> kernel,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> dx);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dkernel);
void knn_select(std::span<const double> features, std::size_t n, std::size_t channels, std::span<const double> gaze,
                double lambda_g, std::size_t k, std::span<std::size_t> neighbors);

}  // namespace omp

/// Threads used by the omp kernels; 0 restores the OpenMP default.
void set_num_threads(int threads);
int num_threads();

}  // namespace gdvig::kernels
