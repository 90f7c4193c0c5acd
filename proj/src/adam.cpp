#include "gdvig/adam.hpp"

#include <cmath>

#include "gdvig/error.hpp"

namespace gdvig {

void adam_step(std::vector<Parameter*> params, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("adam: lr must be > 0");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1)) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
  if (!(cfg.eps > 0)) throw ConfigError("adam: eps must be > 0");
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam: parameter list changed between steps");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape()) continue;  // never reached by backward
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace gdvig
