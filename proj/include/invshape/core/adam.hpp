#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "invshape/core/params.hpp"

namespace invshape {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::uint64_t step_count = 0;

  AdamState() = default;
  AdamState(const ParamStore& params, AdamConfig cfg) : config(cfg) {
    if (!(cfg.learning_rate >= 0.0))
      fail<ConfigError>("adam: learning rate must be >= 0, got ", cfg.learning_rate);
    if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0))
      fail<ConfigError>("adam: betas must lie in (0,1)");
    if (!(cfg.epsilon > 0.0)) fail<ConfigError>("adam: epsilon must be > 0");
    for (const Parameter& p : params) {
      first_moment.emplace_back(p.node.shape());
      second_moment.emplace_back(p.node.shape());
    }
  }
};

/// Bias-corrected Adam update of every trainable parameter. Frozen
/// parameters are not touched.
inline void adam_step(ParamStore& params, AdamState& state) {
  if (state.first_moment.size() != params.size())
    fail<ShapeError>("adam_step: state tracks ", state.first_moment.size(),
                     " parameters, store has ", params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable && !params[i].node.has_grad())
      fail<Error>("adam_step: trainable parameter '", params[i].name,
                  "' has no gradient");

  ++state.step_count;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    Array& w = params[i].node.mutable_value();
    const Array& g = params[i].node.grad();
    Array& m = state.first_moment[i];
    Array& v = state.second_moment[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / corr1;
      const double vhat = v[k] / corr2;
      w[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace invshape
