#pragma once

#include <string>
#include <vector>

#include "fluxtft/core/rng.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/nn/ops.hpp"
#include "fluxtft/windows.hpp"

namespace fluxtft::tft {

using nn::CSpan;
using nn::MSpan;
using nn::Vec;

/// Per-component generator so initial values depend only on (seed, name).
inline Rng component_rng(std::uint64_t seed, const std::string& name) { return Rng(Rng::derive(seed, text::fnv1a(name))); }

inline void add_into(CSpan src, MSpan dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

/// Gated residual network:
///   a   = W2 x + W3 c + b2,  eta2 = ELU(a)
///   eta1 = dropout(W1 eta2 + b1)
///   y   = LayerNorm(skip(x) + GLU(eta1))
/// skip is the identity when in == out, a linear projection otherwise.
struct Grn {
  nn::Dense w2, w3, w1, skip;
  nn::Glu glu;
  nn::LayerNorm norm;
  std::size_t in = 0, hidden = 0, out = 0, ctx = 0;

  struct Cache {
    Vec a, eta2, eta1, mask, gated, sum;
    nn::Glu::Cache glu;
    nn::LayerNorm::Cache norm;
    Vec scratch;
  };

  static Grn create(nn::ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out, std::size_t ctx, std::uint64_t seed) {
    Rng rng = component_rng(seed, name);
    Grn g;
    g.in = in;
    g.hidden = hidden;
    g.out = out;
    g.ctx = ctx;
    g.w2 = nn::Dense::create(store, name + ".W2", in, hidden, rng);
    if (ctx > 0) g.w3 = nn::Dense::create(store, name + ".W3", ctx, hidden, rng, false);
    g.w1 = nn::Dense::create(store, name + ".W1", hidden, hidden, rng);
    g.glu = nn::Glu::create(store, name + ".glu", hidden, out, rng);
    if (in != out) g.skip = nn::Dense::create(store, name + ".skip", in, out, rng);
    g.norm = nn::LayerNorm::create(store, name + ".norm", out);
    return g;
  }

  void forward(CSpan x, CSpan c, MSpan y, Cache& k, Rng* drop, double p) const {
    k.a.resize(hidden);
    w2.forward(x, k.a);
    if (ctx > 0) w3.forward_add(c, k.a);
    k.eta2.resize(hidden);
    nn::elu_forward(k.a, k.eta2);
    k.eta1.resize(hidden);
    w1.forward(k.eta2, k.eta1);
    nn::dropout_mask(hidden, p, drop, k.mask);
    nn::dropout_apply(k.mask, k.eta1);
    k.gated.resize(out);
    glu.forward(k.eta1, k.gated, k.glu);
    k.sum.resize(out);
    if (in != out) {
      skip.forward(x, k.sum);
    } else {
      std::copy(x.begin(), x.end(), k.sum.begin());
    }
    add_into(k.gated, k.sum);
    norm.forward(k.sum, y, k.norm);
  }

  /// Accumulates into dx and dc (dc may be empty when there is no context).
  void backward(CSpan x, CSpan c, Cache& k, CSpan dy, MSpan dx, MSpan dc) const {
    Vec dsum(out, 0.0), deta1(hidden, 0.0), deta2(hidden, 0.0), da(hidden, 0.0);
    norm.backward(k.norm, dy, dsum);
    glu.backward(k.eta1, k.glu, dsum, deta1, k.scratch);
    if (in != out) {
      skip.backward(x, dsum, dx);
    } else {
      add_into(dsum, dx);
    }
    nn::dropout_backward(k.mask, deta1);
    w1.backward(k.eta2, deta1, deta2);
    nn::elu_backward(k.a, deta2, da);
    w2.backward(x, da, dx);
    if (ctx > 0) w3.backward(c, da, dc);
  }
};

/// Variable selection network over m inputs of width d each. Selection
/// weights come from a GRN on the flattened inputs (plus optional context);
/// each input is processed by its own GRN and the results are mixed.
struct Vsn {
  std::vector<Grn> vars;
  Grn flat;
  std::size_t m = 0, d = 0;

  struct Cache {
    std::vector<Grn::Cache> vars;
    Grn::Cache flat;
    Vec logits, weights, processed;  // processed: m x d
  };

  static Vsn create(nn::ParamStore& store, const std::string& name, const std::vector<std::string>& inputs,
                    std::size_t d, std::size_t ctx, std::uint64_t seed) {
    Vsn v;
    v.m = inputs.size();
    v.d = d;
    for (const auto& in : inputs) v.vars.push_back(Grn::create(store, name + ".var." + in, d, d, d, 0, seed));
    v.flat = Grn::create(store, name + ".flat", v.m * d, d, v.m, ctx, seed);
    return v;
  }

  void forward(CSpan xi, CSpan c, MSpan y, Cache& k, Rng* drop, double p) const {
    k.logits.resize(m);
    k.weights.resize(m);
    k.processed.resize(m * d);
    k.vars.resize(m);
    flat.forward(xi, c, k.logits, k.flat, drop, p);
    nn::softmax_forward(k.logits, k.weights);
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      MSpan pj = MSpan(k.processed).subspan(j * d, d);
      vars[j].forward(xi.subspan(j * d, d), {}, pj, k.vars[j], drop, p);
      for (std::size_t t = 0; t < d; ++t) y[t] += k.weights[j] * pj[t];
    }
  }

  void backward(CSpan xi, CSpan c, Cache& k, CSpan dy, MSpan dxi, MSpan dc) const {
    Vec dw(m, 0.0), dlogits(m, 0.0), dp(d);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        s += dy[t] * k.processed[j * d + t];
        dp[t] = k.weights[j] * dy[t];
      }
      dw[j] = s;
      vars[j].backward(xi.subspan(j * d, d), {}, k.vars[j], dp, dxi.subspan(j * d, d), {});
    }
    nn::softmax_backward(k.weights, dw, dlogits);
    flat.backward(xi, c, k.flat, dlogits, dxi, dc);
  }
};

/// Maps one scalar channel to width d: linear for real inputs, an embedding
/// row for categorical ones.
struct InputTransform {
  Kind kind = Kind::real;
  nn::Dense linear;
  nn::Embedding embedding;

  static InputTransform create(nn::ParamStore& store, const Channel& ch, std::size_t d, std::uint64_t seed) {
    const std::string name = "input." + ch.name;
    Rng rng = component_rng(seed, name);
    InputTransform t;
    t.kind = ch.kind;
    if (ch.kind == Kind::categorical) {
      t.embedding = nn::Embedding::create(store, name, static_cast<std::size_t>(std::max(ch.vocab_size, 1)), d, rng);
    } else {
      t.linear = nn::Dense::create(store, name, 1, d, rng);
    }
    return t;
  }

  void forward(double v, MSpan y) const {
    if (kind == Kind::categorical) {
      embedding.forward(v, y);
    } else {
      const double x[1] = {v};
      linear.forward(CSpan(x, 1), y);
    }
  }

  void backward(double v, CSpan dy) const {
    if (kind == Kind::categorical) {
      embedding.backward(v, dy);
    } else {
      const double x[1] = {v};
      linear.backward(CSpan(x, 1), dy, {});
    }
  }
};

}  // namespace fluxtft::tft
