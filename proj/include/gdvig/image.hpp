#pragma once

#include <cstddef>
#include <vector>

#include "gdvig/tensor.hpp"

namespace gdvig {

enum class ResampleMode { kArea, kNearest };

/// Resamples the two trailing (H, W) axes of x to out_h x out_w. Area mode
/// averages the covered input cells (fractional overlaps weighted); nearest
/// picks floor(o * in / out).
Tensor resample2d(const Tensor& x, std::size_t out_h, std::size_t out_w, ResampleMode mode);

/// Normalized 1-D Gaussian taps, radius ceil(3 * sigma).
std::vector<double> gaussian_kernel1d(double sigma);

/// Separable Gaussian blur of an H x W map with reflect (mirror, edge not
/// repeated) padding.
Tensor gaussian_blur2d(const Tensor& x, double sigma);

/// Mirror an out-of-range index back into [0, n).
std::size_t reflect_index(long i, std::size_t n);

}  // namespace gdvig
