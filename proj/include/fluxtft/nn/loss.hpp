#pragma once

#include <span>
#include <string>
#include <vector>

#include "fluxtft/core/error.hpp"

namespace fluxtft::nn {

inline void check_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw UsageError("quantile loss: quantile " + std::to_string(q) + " is outside (0, 1)");
}

/// Pinball loss max(q (y - yhat), (q - 1)(y - yhat)).
inline double quantile_loss(double y, double yhat, double q) {
  check_quantile(q);
  const double e = y - yhat;
  return e >= 0 ? q * e : (q - 1.0) * e;
}

/// d/dyhat of the pinball loss. At y == yhat the zero-valued branch is taken.
inline double quantile_loss_grad(double y, double yhat, double q) {
  check_quantile(q);
  const double e = y - yhat;
  if (e > 0) return -q;
  if (e < 0) return 1.0 - q;
  return 0.0;
}

/// Mean pinball loss over n targets and |Q| quantile predictions each
/// (yhat row-major n x |Q|).
inline double quantile_loss_mean(std::span<const double> y, std::span<const double> yhat,
                                 const std::vector<double>& quantiles) {
  const std::size_t nq = quantiles.size();
  if (nq == 0 || yhat.size() != y.size() * nq) throw UsageError("quantile loss: prediction shape mismatch");
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < nq; ++j) s += quantile_loss(y[i], yhat[i * nq + j], quantiles[j]);
  }
  return s / static_cast<double>(y.size() * nq);
}

}  // namespace fluxtft::nn
