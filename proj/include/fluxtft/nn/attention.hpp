#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fluxtft/nn/ops.hpp"

namespace fluxtft::nn {

/// Masked scaled dot-product weights for one query against n keys (row-major
/// n x dk). mask[j] == 0 excludes key j.
inline void attention_weights(CSpan query, CSpan keys, const std::vector<char>& mask, MSpan weights) {
  const std::size_t n = mask.size();
  detail::require(n > 0 && keys.size() % n == 0, "attention", "key matrix does not match mask length");
  const std::size_t dk = keys.size() / n;
  detail::require_size(query.size(), dk, "attention", "query");
  detail::require_size(weights.size(), n, "attention", "weights");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  double mx = -INFINITY;
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < dk; ++k) s += query[k] * keys[j * dk + k];
    weights[j] = s * scale;
    mx = any ? std::max(mx, weights[j]) : weights[j];
    any = true;
  }
  if (!any) throw UsageError("attention: every key position is masked");
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    weights[j] = mask[j] ? std::exp(weights[j] - mx) : 0.0;
    sum += weights[j];
  }
  for (auto& w : weights) w /= sum;
}

/// Multi-head attention whose heads share the value projection and are
/// averaged before the output projection, so a single weight matrix per query
/// summarizes all heads.
struct InterpretableAttention {
  std::vector<Dense> wq;
  std::vector<Dense> wk;
  Dense wv;
  Dense wo;
  std::size_t d = 0;
  std::size_t heads = 0;
  std::size_t dh = 0;

  struct Cache {
    std::size_t nq = 0, n = 0;
    std::vector<char> mask;  // nq x n
    Vec q;                   // heads x nq x dh
    Vec k;                   // heads x n x dh
    Vec v;                   // n x dh
    Vec a;                   // heads x nq x n
    Vec abar;                // nq x n
    Vec hbar;                // nq x dh
  };

  static InterpretableAttention create(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                                       Rng& rng) {
    detail::require(heads > 0 && d % heads == 0, "attention",
                    "model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
    InterpretableAttention m;
    m.d = d;
    m.heads = heads;
    m.dh = d / heads;
    for (std::size_t h = 0; h < heads; ++h) {
      m.wq.push_back(Dense::create(store, name + ".q" + std::to_string(h), d, m.dh, rng, false));
      m.wk.push_back(Dense::create(store, name + ".k" + std::to_string(h), d, m.dh, rng, false));
    }
    m.wv = Dense::create(store, name + ".v", d, m.dh, rng, false);
    m.wo = Dense::create(store, name + ".o", m.dh, d, rng, false);
    return m;
  }

  /// xq: nq x d queries, xk: n x d keys/values, mask: nq x n. out: nq x d.
  void forward(CSpan xq, CSpan xk, const std::vector<char>& mask, MSpan out, Cache& c) const {
    detail::require(xq.size() % d == 0 && xk.size() % d == 0, "attention", "inputs are not multiples of the width");
    c.nq = xq.size() / d;
    c.n = xk.size() / d;
    detail::require_size(mask.size(), c.nq * c.n, "attention", "mask");
    detail::require_size(out.size(), c.nq * d, "attention", "output");
    const std::size_t nq = c.nq, n = c.n;
    c.mask = mask;
    c.q.assign(heads * nq * dh, 0.0);
    c.k.assign(heads * n * dh, 0.0);
    c.v.assign(n * dh, 0.0);
    c.a.assign(heads * nq * n, 0.0);
    c.abar.assign(nq * n, 0.0);
    c.hbar.assign(nq * dh, 0.0);
    for (std::size_t j = 0; j < n; ++j) wv.forward(xk.subspan(j * d, d), MSpan(c.v).subspan(j * dh, dh));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        wq[h].forward(xq.subspan(i * d, d), MSpan(c.q).subspan((h * nq + i) * dh, dh));
      }
      for (std::size_t j = 0; j < n; ++j) {
        wk[h].forward(xk.subspan(j * d, d), MSpan(c.k).subspan((h * n + j) * dh, dh));
      }
      for (std::size_t i = 0; i < nq; ++i) {
        std::vector<char> row(mask.begin() + static_cast<std::ptrdiff_t>(i * n),
                              mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        try {
          attention_weights(CSpan(c.q).subspan((h * nq + i) * dh, dh), CSpan(c.k).subspan(h * n * dh, n * dh), row,
                            MSpan(c.a).subspan((h * nq + i) * n, n));
        } catch (const UsageError&) {
          throw UsageError("attention: query " + std::to_string(i) + " has no unmasked position");
        }
      }
    }
    const double inv_h = 1.0 / static_cast<double>(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < nq * n; ++t) c.abar[t] += c.a[h * nq * n + t] * inv_h;
    }
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = c.abar[i * n + j];
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < dh; ++k) c.hbar[i * dh + k] += w * c.v[j * dh + k];
      }
      wo.forward(CSpan(c.hbar).subspan(i * dh, dh), out.subspan(i * d, d));
    }
  }

  /// Head-averaged weights for query i (length n).
  CSpan weights(const Cache& c, std::size_t i) const { return CSpan(c.abar).subspan(i * c.n, c.n); }

  void backward(CSpan xq, CSpan xk, const Cache& c, CSpan dout, MSpan dxq, MSpan dxk) const {
    const std::size_t nq = c.nq, n = c.n;
    detail::require(dout.size() == nq * d && dxq.size() == nq * d && dxk.size() == n * d, "attention",
                    "gradient size mismatch");
    Vec dhbar(nq * dh, 0.0), dv(n * dh, 0.0), dabar(nq * n, 0.0), dq(dh), dk(n * dh), dscore(n);
    for (std::size_t i = 0; i < nq; ++i) {
      wo.backward(CSpan(c.hbar).subspan(i * dh, dh), dout.subspan(i * d, d), MSpan(dhbar).subspan(i * dh, dh));
    }
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        const double w = c.abar[i * n + j];
        for (std::size_t k = 0; k < dh; ++k) {
          s += dhbar[i * dh + k] * c.v[j * dh + k];
          dv[j * dh + k] += w * dhbar[i * dh + k];
        }
        dabar[i * n + j] = s;
      }
    }
    for (std::size_t j = 0; j < n; ++j) wv.backward(xk.subspan(j * d, d), CSpan(dv).subspan(j * dh, dh), dxk.subspan(j * d, d));
    const double inv_h = 1.0 / static_cast<double>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Vec da(n);
    for (std::size_t h = 0; h < heads; ++h) {
      std::fill(dk.begin(), dk.end(), 0.0);
      for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < n; ++j) da[j] = dabar[i * n + j] * inv_h;
        std::fill(dscore.begin(), dscore.end(), 0.0);
        softmax_backward(CSpan(c.a).subspan((h * nq + i) * n, n), da, dscore);
        std::fill(dq.begin(), dq.end(), 0.0);
        const double* q = c.q.data() + (h * nq + i) * dh;
        for (std::size_t j = 0; j < n; ++j) {
          if (!c.mask[i * n + j]) continue;
          const double g = dscore[j] * scale;
          const double* kv = c.k.data() + (h * n + j) * dh;
          for (std::size_t k = 0; k < dh; ++k) {
            dq[k] += g * kv[k];
            dk[j * dh + k] += g * q[k];
          }
        }
        wq[h].backward(xq.subspan(i * d, d), dq, dxq.subspan(i * d, d));
      }
      for (std::size_t j = 0; j < n; ++j) {
        wk[h].backward(xk.subspan(j * d, d), CSpan(dk).subspan(j * dh, dh), dxk.subspan(j * d, d));
      }
    }
  }
};

}  // namespace fluxtft::nn
