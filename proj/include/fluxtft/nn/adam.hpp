#pragma once

#include <cmath>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/nn/params.hpp"

namespace fluxtft::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

inline double grad_norm(const ParamStore& store) {
  double s = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double g : store[i].grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

/// One bias-corrected Adam update. Throws DivergenceError naming the first
/// parameter whose gradient is not finite; values are untouched in that case.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double g : store[i].grad.values()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + store[i].name + "'");
    }
  }
  double scale = 1.0;
  if (cfg.clip_norm > 0) {
    const double norm = grad_norm(store);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }
  store.step += 1;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k] * scale;
      p.m[k] = cfg.beta1 * p.m[k] + (1.0 - cfg.beta1) * g;
      p.v[k] = cfg.beta2 * p.v[k] + (1.0 - cfg.beta2) * g * g;
      p.value[k] -= cfg.learning_rate * (p.m[k] / c1) / (std::sqrt(p.v[k] / c2) + cfg.eps);
    }
  }
}

}  // namespace fluxtft::nn
