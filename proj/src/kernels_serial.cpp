#include <algorithm>
#include <utility>
#include <vector>

#include "gdvig/kernels.hpp"

namespace gdvig::kernels::serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> kernel,
                    std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_ch; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double sum = 0.0;
          for (std::size_t ci = 0; ci < g.in_ch; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky)
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
                sum += kernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx] *
                       x[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix];
              }
          out[((b * g.out_ch + co) * oh + oy) * ow + ox] = sum;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_ch; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = dout[((b * g.out_ch + co) * oh + oy) * ow + ox];
          for (std::size_t ci = 0; ci < g.in_ch; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky)
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
                dx[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix] +=
                    go * kernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx];
              }
        }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dkernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_ch; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = dout[((b * g.out_ch + co) * oh + oy) * ow + ox];
          for (std::size_t ci = 0; ci < g.in_ch; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky)
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
                dkernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx] +=
                    go * x[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix];
              }
        }
}

void knn_select(std::span<const double> features, std::size_t n, std::size_t channels, std::span<const double> gaze,
                double lambda_g, std::size_t k, std::span<std::size_t> neighbors) {
  const double* g = gaze.empty() ? nullptr : gaze.data();
  // Full distance matrix, then a complete sort of every row.
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      dist[i * n + j] =
          pair_distance(features.data() + i * channels, features.data() + j * channels, channels, g, i, j, lambda_g);
  std::vector<std::pair<double, std::size_t>> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.emplace_back(dist[i * n + j], j);
    std::sort(row.begin(), row.end());
    for (std::size_t r = 0; r < k; ++r) neighbors[i * k + r] = row[r].second;
  }
}

}  // namespace gdvig::kernels::serial
