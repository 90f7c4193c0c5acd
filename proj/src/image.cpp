#include "gdvig/image.hpp"

#include <algorithm>
#include <cmath>

#include "gdvig/error.hpp"

namespace gdvig {
namespace {

// Row o of the returned (out x in) matrix holds the area weights of input cells
// covered by output cell o.
std::vector<double> area_weights(std::size_t in, std::size_t out) {
  std::vector<double> w(out * in, 0.0);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (std::size_t i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) w[o * in + i] = overlap / scale;
    }
  }
  return w;
}

}  // namespace

Tensor resample2d(const Tensor& x, std::size_t out_h, std::size_t out_w, ResampleMode mode) {
  if (x.rank() < 2) throw DimensionError("resample2d: need at least 2 dims, got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw DimensionError("resample2d: target dims must be positive");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.size() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  Tensor out(out_shape);
  auto src = x.data();
  auto dst = out.data();

  if (mode == ResampleMode::kNearest) {
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const std::size_t iy = oy * h / out_h, ix = ox * w / out_w;
          dst[(p * out_h + oy) * out_w + ox] = src[(p * h + iy) * w + ix];
        }
    return out;
  }

  if (h % out_h == 0 && w % out_w == 0) {
    // Integer factors: plain block mean.
    const std::size_t fy = h / out_h, fx = w / out_w;
    const double count = static_cast<double>(fy * fx);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          double sum = 0.0;
          for (std::size_t y = oy * fy; y < (oy + 1) * fy; ++y)
            for (std::size_t xx = ox * fx; xx < (ox + 1) * fx; ++xx) sum += src[(p * h + y) * w + xx];
          dst[(p * out_h + oy) * out_w + ox] = sum / count;
        }
    return out;
  }

  const auto wy = area_weights(h, out_h);
  const auto wx = area_weights(w, out_w);
  std::vector<double> tmp(out_h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t y = 0; y < h; ++y) {
        const double a = wy[oy * h + y];
        if (a == 0.0) continue;
        for (std::size_t xx = 0; xx < w; ++xx) tmp[oy * w + xx] += a * src[(p * h + y) * w + xx];
      }
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double sum = 0.0;
        for (std::size_t xx = 0; xx < w; ++xx) sum += wx[ox * w + xx] * tmp[oy * w + xx];
        dst[(p * out_h + oy) * out_w + ox] = sum;
      }
  }
  return out;
}

std::vector<double> gaussian_kernel1d(double sigma) {
  if (!(sigma > 0)) throw ConfigError("gaussian blur: sigma must be > 0");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

Tensor gaussian_blur2d(const Tensor& x, double sigma) {
  if (x.rank() != 2) throw DimensionError("gaussian_blur2d: expected H x W, got " + shape_str(x.shape()));
  const auto k = gaussian_kernel1d(sigma);
  const long radius = static_cast<long>(k.size() / 2);
  const std::size_t h = x.dim(0), w = x.dim(1);
  Tensor tmp({h, w});
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) {
      double sum = 0.0;
      for (long t = -radius; t <= radius; ++t) {
        sum += k[t + radius] * x[y * w + reflect_index(static_cast<long>(xx) + t, w)];
      }
      tmp[y * w + xx] = sum;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) {
      double sum = 0.0;
      for (long t = -radius; t <= radius; ++t) {
        sum += k[t + radius] * tmp[reflect_index(static_cast<long>(y) + t, h) * w + xx];
      }
      out[y * w + xx] = sum;
    }
  return out;
}

}  // namespace gdvig
