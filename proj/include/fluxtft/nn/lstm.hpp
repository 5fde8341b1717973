#pragma once

#include <cmath>
#include <string>

#include "fluxtft/nn/ops.hpp"

namespace fluxtft::nn {

/// Single-layer LSTM cell with gates ordered (input, forget, cell, output).
struct Lstm {
  Param* wx = nullptr;  // (4H, in)
  Param* wh = nullptr;  // (4H, H)
  Param* b = nullptr;   // (4H)
  std::size_t in = 0;
  std::size_t hidden = 0;

  struct Step {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o;
    Vec c, tanh_c, h;
  };

  static Lstm create(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
    Lstm l;
    l.in = in;
    l.hidden = hidden;
    l.wx = store.add(name + ".Wx", {4 * hidden, in});
    l.wh = store.add(name + ".Wh", {4 * hidden, hidden});
    l.b = store.add(name + ".b", {4 * hidden});
    ParamStore::init_xavier(*l.wx, in, hidden, rng);
    ParamStore::init_xavier(*l.wh, hidden, hidden, rng);
    for (std::size_t k = 0; k < hidden; ++k) l.b->value[hidden + k] = 1.0;
    return l;
  }

  void step(CSpan x, CSpan h_prev, CSpan c_prev, Step& s) const {
    detail::require_size(x.size(), in, "lstm", "input");
    detail::require_size(h_prev.size(), hidden, "lstm", "hidden state");
    detail::require_size(c_prev.size(), hidden, "lstm", "cell state");
    const std::size_t H = hidden;
    s.x.assign(x.begin(), x.end());
    s.h_prev.assign(h_prev.begin(), h_prev.end());
    s.c_prev.assign(c_prev.begin(), c_prev.end());
    s.i.resize(H);
    s.f.resize(H);
    s.g.resize(H);
    s.o.resize(H);
    s.c.resize(H);
    s.tanh_c.resize(H);
    s.h.resize(H);
    const double* Wx = wx->value.data();
    const double* Wh = wh->value.data();
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double z = b->value[r];
      const double* rx = Wx + r * in;
      for (std::size_t k = 0; k < in; ++k) z += rx[k] * x[k];
      const double* rh = Wh + r * H;
      for (std::size_t k = 0; k < H; ++k) z += rh[k] * h_prev[k];
      const std::size_t gate = r / H, u = r % H;
      switch (gate) {
        case 0: s.i[u] = sigmoid(z); break;
        case 1: s.f[u] = sigmoid(z); break;
        case 2: s.g[u] = std::tanh(z); break;
        default: s.o[u] = sigmoid(z); break;
      }
    }
    for (std::size_t u = 0; u < H; ++u) {
      s.c[u] = s.f[u] * c_prev[u] + s.i[u] * s.g[u];
      s.tanh_c[u] = std::tanh(s.c[u]);
      s.h[u] = s.o[u] * s.tanh_c[u];
    }
  }

  /// Accumulates into dx, dh_prev, dc_prev and the parameter gradients.
  void backward(const Step& s, CSpan dh, CSpan dc, MSpan dx, MSpan dh_prev, MSpan dc_prev, Vec& dz) const {
    const std::size_t H = hidden;
    detail::require(dh.size() == H && dc.size() == H && dh_prev.size() == H && dc_prev.size() == H, "lstm",
                    "state gradient size mismatch");
    dz.assign(4 * H, 0.0);
    for (std::size_t u = 0; u < H; ++u) {
      const double dct = dc[u] + dh[u] * s.o[u] * (1.0 - s.tanh_c[u] * s.tanh_c[u]);
      dz[u] = dct * s.g[u] * s.i[u] * (1.0 - s.i[u]);
      dz[H + u] = dct * s.c_prev[u] * s.f[u] * (1.0 - s.f[u]);
      dz[2 * H + u] = dct * s.i[u] * (1.0 - s.g[u] * s.g[u]);
      dz[3 * H + u] = dh[u] * s.tanh_c[u] * s.o[u] * (1.0 - s.o[u]);
      dc_prev[u] += dct * s.f[u];
    }
    const double* Wx = wx->value.data();
    const double* Wh = wh->value.data();
    double* dWx = wx->grad.data();
    double* dWh = wh->grad.data();
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const double g = dz[r];
      b->grad[r] += g;
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < in; ++k) {
        dWx[r * in + k] += g * s.x[k];
        if (!dx.empty()) dx[k] += g * Wx[r * in + k];
      }
      for (std::size_t k = 0; k < H; ++k) {
        dWh[r * H + k] += g * s.h_prev[k];
        dh_prev[k] += g * Wh[r * H + k];
      }
    }
  }
};

}  // namespace fluxtft::nn
