#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gdvig/blocks.hpp"

namespace gdvig {

/// A scalar objective over leaf inputs and the trainable entries of `params`.
struct GradcheckCase {
  std::string name;
  std::vector<Tensor> inputs;
  ParamStore params;
  BnMode mode = BnMode::kTrain;
  std::function<Var(const Context&, std::span<const Var>)> build;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0;  // worst tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::string worst_tensor;
  std::size_t entries = 0;
  bool passed = false;
};

/// Central differences with step h on every input and trainable parameter entry.
GradcheckResult run_gradcheck(GradcheckCase& c, double h = 1e-6, double tol = 1e-5);

/// Reduces any tensor to a scalar with fixed pseudo-random weights, so every
/// output entry contributes to the checked gradient.
Var project(Var v, std::uint64_t seed);

/// One case per differentiable op plus the composed blocks and both subnets.
std::vector<GradcheckCase> gradcheck_cases(std::uint64_t seed);
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, double h = 1e-6, double tol = 1e-5);

}  // namespace gdvig
