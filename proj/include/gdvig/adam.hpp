#pragma once

#include <cstdint>
#include <vector>

#include "gdvig/autograd.hpp"

namespace gdvig {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update over every trainable parameter, reading
/// Parameter::grad. State is sized lazily on the first call.
void adam_step(std::vector<Parameter*> params, AdamState& state, const AdamConfig& cfg);

}  // namespace gdvig
