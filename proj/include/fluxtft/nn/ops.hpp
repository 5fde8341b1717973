#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/rng.hpp"
#include "fluxtft/nn/params.hpp"

// Differentiable primitives. Forward functions write their outputs; every
// backward function *accumulates* into the input-gradient buffers it is given
// and into parameter gradient slots. Callers zero buffers beforehand.

namespace fluxtft::nn {

using Vec = std::vector<double>;
using CSpan = std::span<const double>;
using MSpan = std::span<double>;

namespace detail {

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw UsageError(std::string(op) + ": " + what);
}

inline void require_size(std::size_t got, std::size_t want, const char* op, const char* which) {
  if (got != want) {
    throw UsageError(std::string(op) + ": " + which + " has size " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

}  // namespace detail

inline double sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// Affine map y = W x + b with W of shape (out, in).
struct Dense {
  Param* w = nullptr;
  Param* b = nullptr;  // may be null
  std::size_t in = 0;
  std::size_t out = 0;

  static Dense create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool bias = true) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w = store.add(name + ".W", {out, in});
    ParamStore::init_xavier(*d.w, in, out, rng);
    if (bias) d.b = store.add(name + ".b", {out});
    return d;
  }

  void forward(CSpan x, MSpan y) const {
    detail::require_size(x.size(), in, "dense", "input");
    detail::require_size(y.size(), out, "dense", "output");
    const double* W = w->value.data();
    for (std::size_t o = 0; o < out; ++o) {
      double s = b ? b->value[o] : 0.0;
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
      y[o] = s;
    }
  }

  /// y += W x + b.
  void forward_add(CSpan x, MSpan y) const {
    detail::require_size(x.size(), in, "dense", "input");
    detail::require_size(y.size(), out, "dense", "output");
    const double* W = w->value.data();
    for (std::size_t o = 0; o < out; ++o) {
      double s = b ? b->value[o] : 0.0;
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
      y[o] += s;
    }
  }

  /// dW += dy x^T, db += dy, dx += W^T dy (dx may be empty to skip).
  void backward(CSpan x, CSpan dy, MSpan dx) const {
    detail::require_size(x.size(), in, "dense", "input");
    detail::require_size(dy.size(), out, "dense", "output gradient");
    detail::require(dx.empty() || dx.size() == in, "dense", "input gradient size mismatch");
    const double* W = w->value.data();
    double* dW = w->grad.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[o];
      if (b) b->grad[o] += g;
      if (g == 0.0) continue;
      double* drow = dW + o * in;
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
      if (!dx.empty()) {
        for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
      }
    }
  }
};

inline void elu_forward(CSpan x, MSpan y) {
  detail::require_size(y.size(), x.size(), "elu", "output");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : std::expm1(x[i]);
}

inline void elu_backward(CSpan x, CSpan dy, MSpan dx) {
  detail::require(dy.size() == x.size() && dx.size() == x.size(), "elu", "size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * (x[i] > 0 ? 1.0 : std::exp(x[i]));
}

inline void softmax_forward(CSpan x, MSpan y) {
  detail::require_size(y.size(), x.size(), "softmax", "output");
  detail::require(!x.empty(), "softmax", "empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (auto& v : y) v /= sum;
}

/// Backward through softmax given its output y.
inline void softmax_backward(CSpan y, CSpan dy, MSpan dx) {
  detail::require(dy.size() == y.size() && dx.size() == y.size(), "softmax", "size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (dy[i] - dot);
}

/// Gated linear unit: sigmoid(W_g x + b_g) * (W_v x + b_v).
struct Glu {
  Dense gate;
  Dense value;

  struct Cache {
    Vec gate;   // after sigmoid
    Vec value;  // value path
  };

  static Glu create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {Dense::create(store, name + ".gate", in, out, rng), Dense::create(store, name + ".value", in, out, rng)};
  }

  std::size_t out() const { return gate.out; }

  void forward(CSpan x, MSpan y, Cache& c) const {
    detail::require_size(y.size(), gate.out, "glu", "output");
    c.gate.resize(gate.out);
    c.value.resize(value.out);
    gate.forward(x, c.gate);
    value.forward(x, c.value);
    for (std::size_t i = 0; i < gate.out; ++i) {
      c.gate[i] = sigmoid(c.gate[i]);
      y[i] = c.gate[i] * c.value[i];
    }
  }

  void backward(CSpan x, const Cache& c, CSpan dy, MSpan dx, Vec& scratch) const {
    detail::require_size(dy.size(), gate.out, "glu", "output gradient");
    scratch.assign(2 * gate.out, 0.0);
    MSpan dg(scratch.data(), gate.out), dv(scratch.data() + gate.out, gate.out);
    for (std::size_t i = 0; i < gate.out; ++i) {
      dg[i] = dy[i] * c.value[i] * c.gate[i] * (1.0 - c.gate[i]);
      dv[i] = dy[i] * c.gate[i];
    }
    gate.backward(x, dg, dx);
    value.backward(x, dv, dx);
  }
};

/// Layer normalization with learnable gain and bias.
struct LayerNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  std::size_t n = 0;
  static constexpr double kEps = 1e-5;

  struct Cache {
    Vec xhat;
    double inv_std = 0.0;
  };

  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t n) {
    LayerNorm ln;
    ln.n = n;
    ln.gamma = store.add(name + ".gamma", {n});
    ln.gamma->value.fill(1.0);
    ln.beta = store.add(name + ".beta", {n});
    return ln;
  }

  void forward(CSpan x, MSpan y, Cache& c) const {
    detail::require_size(x.size(), n, "layer_norm", "input");
    detail::require_size(y.size(), n, "layer_norm", "output");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    c.inv_std = 1.0 / std::sqrt(var + kEps);
    c.xhat.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c.xhat[i] = (x[i] - mean) * c.inv_std;
      y[i] = gamma->value[i] * c.xhat[i] + beta->value[i];
    }
  }

  void backward(const Cache& c, CSpan dy, MSpan dx) const {
    detail::require(dy.size() == n && dx.size() == n, "layer_norm", "size mismatch");
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gamma->grad[i] += dy[i] * c.xhat[i];
      beta->grad[i] += dy[i];
      const double d = dy[i] * gamma->value[i];
      sum_d += d;
      sum_dx += d * c.xhat[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = dy[i] * gamma->value[i];
      dx[i] += c.inv_std * (d - inv_n * sum_d - c.xhat[i] * inv_n * sum_dx);
    }
  }
};

/// Inverted dropout: fills `mask` with 0 or 1/(1-p). Empty mask when inactive.
inline void dropout_mask(std::size_t n, double p, Rng* rng, Vec& mask) {
  if (p <= 0.0 || rng == nullptr) {
    mask.clear();
    return;
  }
  detail::require(p < 1.0, "dropout", "rate must be < 1");
  mask.resize(n);
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng->uniform() < p ? 0.0 : keep;
}

inline void dropout_apply(const Vec& mask, MSpan x) {
  if (mask.empty()) return;
  detail::require_size(x.size(), mask.size(), "dropout", "input");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

inline void dropout_backward(const Vec& mask, MSpan dy) { dropout_apply(mask, dy); }

/// Row lookup in a (vocab, dim) table.
struct Embedding {
  Param* table = nullptr;
  std::size_t vocab = 0;
  std::size_t dim = 0;

  static Embedding create(ParamStore& store, const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng) {
    Embedding e;
    e.vocab = vocab;
    e.dim = dim;
    e.table = store.add(name + ".table", {vocab, dim});
    for (auto& v : e.table->value.values()) v = rng.normal(0.0, 0.5);
    return e;
  }

  std::size_t checked(double index) const {
    const auto i = static_cast<long long>(index);
    detail::require(static_cast<double>(i) == index && i >= 0 && static_cast<std::size_t>(i) < vocab, "embedding",
                    "index " + std::to_string(index) + " out of range");
    return static_cast<std::size_t>(i);
  }

  void forward(double index, MSpan y) const {
    detail::require_size(y.size(), dim, "embedding", "output");
    const std::size_t i = checked(index);
    std::copy_n(table->value.data() + i * dim, dim, y.begin());
  }

  void backward(double index, CSpan dy) const {
    detail::require_size(dy.size(), dim, "embedding", "output gradient");
    double* g = table->grad.data() + checked(index) * dim;
    for (std::size_t k = 0; k < dim; ++k) g[k] += dy[k];
  }
};

inline void add_forward(CSpan a, CSpan b, MSpan y) {
  detail::require(a.size() == b.size() && y.size() == a.size(), "add", "size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
}

inline void add_backward(CSpan dy, MSpan da, MSpan db) {
  detail::require(da.size() == dy.size() && db.size() == dy.size(), "add", "size mismatch");
  for (std::size_t i = 0; i < dy.size(); ++i) {
    da[i] += dy[i];
    db[i] += dy[i];
  }
}

inline void mul_forward(CSpan a, CSpan b, MSpan y) {
  detail::require(a.size() == b.size() && y.size() == a.size(), "multiply", "size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
}

inline void mul_backward(CSpan a, CSpan b, CSpan dy, MSpan da, MSpan db) {
  detail::require(a.size() == b.size() && dy.size() == a.size() && da.size() == a.size() && db.size() == a.size(),
                  "multiply", "size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] += dy[i] * b[i];
    db[i] += dy[i] * a[i];
  }
}

inline void concat_forward(const std::vector<CSpan>& parts, MSpan y) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  detail::require_size(y.size(), total, "concat", "output");
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.begin(), p.end(), y.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
}

inline void concat_backward(CSpan dy, const std::vector<MSpan>& dparts) {
  std::size_t total = 0;
  for (const auto& p : dparts) total += p.size();
  detail::require_size(dy.size(), total, "concat", "output gradient");
  std::size_t off = 0;
  for (const auto& p : dparts) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += dy[off + i];
    off += p.size();
  }
}

}  // namespace fluxtft::nn
