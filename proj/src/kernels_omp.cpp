#include <omp.h>

#include <algorithm>
#include <utility>
#include <vector>

#include "gdvig/kernels.hpp"

namespace gdvig::kernels {

void set_num_threads(int threads) {
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : default_threads);
}

int num_threads() { return omp_get_max_threads(); }

namespace omp {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel
  {
    std::vector<double> acc(n);
    std::vector<double> bcol;
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (trans_b) {
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * b[j * k + p];
        } else {
          const double* brow = b.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
      }
      double* crow = c.data() + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), crow);
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> kernel,
                    std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long planes = static_cast<long>(g.batch * g.out_ch);
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const std::size_t b = static_cast<std::size_t>(pl) / g.out_ch;
    const std::size_t co = static_cast<std::size_t>(pl) % g.out_ch;
    double* o = out.data() + static_cast<std::size_t>(pl) * oh * ow;
    std::fill(o, o + oh * ow, 0.0);
    for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
      const double* xin = x.data() + (b * g.in_ch + ci) * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double w = kernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
            const double* xrow = xin + static_cast<std::size_t>(iy) * g.in_w;
            double* orow = o + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
              orow[ox] += w * xrow[ix];
            }
          }
        }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long planes = static_cast<long>(g.batch * g.in_ch);
#pragma omp parallel
  {
    std::vector<double> acc(g.in_h * g.in_w);
#pragma omp for schedule(static)
    for (long pl = 0; pl < planes; ++pl) {
      const std::size_t b = static_cast<std::size_t>(pl) / g.in_ch;
      const std::size_t ci = static_cast<std::size_t>(pl) % g.in_ch;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t co = 0; co < g.out_ch; ++co) {
        const double* go = dout.data() + (b * g.out_ch + co) * oh * ow;
        for (std::size_t ky = 0; ky < g.k; ++ky)
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const double w = kernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              double* arow = acc.data() + static_cast<std::size_t>(iy) * g.in_w;
              const double* grow = go + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                arow[ix] += w * grow[ox];
              }
            }
          }
      }
      double* d = dx.data() + static_cast<std::size_t>(pl) * g.in_h * g.in_w;
      for (std::size_t i = 0; i < acc.size(); ++i) d[i] += acc[i];
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dkernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pairs = static_cast<long>(g.out_ch * g.in_ch);
#pragma omp parallel for schedule(static)
  for (long pr = 0; pr < pairs; ++pr) {
    const std::size_t co = static_cast<std::size_t>(pr) / g.in_ch;
    const std::size_t ci = static_cast<std::size_t>(pr) % g.in_ch;
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double sum = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* go = dout.data() + (b * g.out_ch + co) * oh * ow;
          const double* xin = x.data() + (b * g.in_ch + ci) * g.in_h * g.in_w;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
            const double* xrow = xin + static_cast<std::size_t>(iy) * g.in_w;
            const double* grow = go + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
              sum += grow[ox] * xrow[ix];
            }
          }
        }
        dkernel[((co * g.in_ch + ci) * g.k + ky) * g.k + kx] += sum;
      }
  }
}

void knn_select(std::span<const double> features, std::size_t n, std::size_t channels, std::span<const double> gaze,
                double lambda_g, std::size_t k, std::span<std::size_t> neighbors) {
  const double* g = gaze.empty() ? nullptr : gaze.data();
  const long rows = static_cast<long>(n);
#pragma omp parallel
  {
    std::vector<std::pair<double, std::size_t>> row;
    row.reserve(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      row.clear();
      const double* xi = features.data() + i * channels;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        row.emplace_back(pair_distance(xi, features.data() + j * channels, channels, g, i, j, lambda_g), j);
      }
      std::partial_sort(row.begin(), row.begin() + static_cast<long>(k), row.end());
      for (std::size_t r = 0; r < k; ++r) neighbors[i * k + r] = row[r].second;
    }
  }
}

}  // namespace omp
}  // namespace gdvig::kernels
