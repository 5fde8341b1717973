#pragma once

// Gradient-check cases shared by the unit tests and the acceptance run.
// Every case compares analytic gradients of a small network piece with
// central differences; inputs are registered as parameters so their
// gradients are covered too.

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluxtft/nn/adam.hpp"
#include "fluxtft/nn/attention.hpp"
#include "fluxtft/nn/gradcheck.hpp"
#include "fluxtft/nn/loss.hpp"
#include "fluxtft/nn/lstm.hpp"
#include "fluxtft/nn/ops.hpp"
#include "fluxtft/tft/layers.hpp"
#include "fluxtft/tft/model.hpp"
#include "helpers.hpp"

namespace gradcases {

using namespace fluxtft;
using namespace fluxtft::nn;

inline constexpr double kPrimitiveTol = 1e-5;
inline constexpr double kModelTol = 1e-4;

// Inputs live in the store too, so their gradients are checked as well.
inline Param* input(ParamStore& store, const std::string& name, std::size_t n, Rng& rng, double scale = 1.0) {
  Param* p = store.add(name, {n});
  for (auto& v : p->value.values()) v = rng.normal(0.0, scale);
  return p;
}

// Random linear read-out r . y turns any output into a scalar loss.
struct Readout {
  Vec r;
  Readout(std::size_t n, Rng& rng) : r(n) {
    for (auto& v : r) v = rng.normal(0.0, 1.0);
  }
  double loss(CSpan y) const {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  }
};

// fn(bool backward) returns the loss; with backward set it also accumulates gradients.
inline GradCheckReport run(ParamStore& store, const std::function<double(bool)>& fn, double tol = kPrimitiveTol) {
  GradCheckOptions opt;
  opt.tolerance = tol;
  return gradient_check(
      store, [&] { return fn(false); }, [&] { return fn(true); }, opt);
}

inline nn::GradCheckReport dense() {
  ParamStore store;
  Rng rng(1);
  const Dense d = Dense::create(store, "d", 5, 3, rng);
  Param* x = input(store, "x", 5, rng);
  const Readout ro(3, rng);
  return run(store, [&](bool back) {
    Vec y(3);
    d.forward(x->value.values(), y);
    if (back) d.backward(x->value.values(), ro.r, x->grad.values());
    return ro.loss(y);
  });
}

inline nn::GradCheckReport elu_softmax() {
  ParamStore store;
  Rng rng(2);
  Param* x = input(store, "x", 6, rng);
  const Readout ro(6, rng);
  return run(store, [&](bool back) {
    Vec a(6), s(6);
    elu_forward(x->value.values(), a);
    softmax_forward(a, s);
    if (back) {
      Vec da(6, 0.0);
      softmax_backward(s, ro.r, da);
      elu_backward(x->value.values(), da, x->grad.values());
    }
    return ro.loss(s);
  });
}

inline nn::GradCheckReport glu() {
  ParamStore store;
  Rng rng(3);
  const Glu g = Glu::create(store, "glu", 4, 3, rng);
  Param* x = input(store, "x", 4, rng);
  const Readout ro(3, rng);
  return run(store, [&](bool back) {
    Vec y(3), scratch;
    Glu::Cache c;
    g.forward(x->value.values(), y, c);
    if (back) g.backward(x->value.values(), c, ro.r, x->grad.values(), scratch);
    return ro.loss(y);
  });
}

inline nn::GradCheckReport layer_norm() {
  ParamStore store;
  Rng rng(4);
  const LayerNorm ln = LayerNorm::create(store, "ln", 5);
  for (auto& v : ln.gamma->value.values()) v = rng.uniform(0.5, 1.5);
  for (auto& v : ln.beta->value.values()) v = rng.normal(0, 0.3);
  Param* x = input(store, "x", 5, rng);
  const Readout ro(5, rng);
  return run(store, [&](bool back) {
    Vec y(5);
    LayerNorm::Cache c;
    ln.forward(x->value.values(), y, c);
    if (back) ln.backward(c, ro.r, x->grad.values());
    return ro.loss(y);
  });
}

inline nn::GradCheckReport embedding_mul_add_concat() {
  ParamStore store;
  Rng rng(5);
  const Embedding e = Embedding::create(store, "emb", 4, 3, rng);
  Param* a = input(store, "a", 3, rng);
  Param* b = input(store, "b", 3, rng);
  const Readout ro(6, rng);
  return run(store, [&](bool back) {
    Vec row(3), prod(3), sum(3), cat(6);
    e.forward(2.0, row);
    mul_forward(row, a->value.values(), prod);
    add_forward(prod, b->value.values(), sum);
    concat_forward({CSpan(sum), CSpan(row)}, cat);
    if (back) {
      Vec dsum(3, 0.0), drow(3, 0.0), dprod(3, 0.0);
      concat_backward(ro.r, {MSpan(dsum), MSpan(drow)});
      add_backward(dsum, dprod, b->grad.values());
      mul_backward(row, a->value.values(), dprod, drow, a->grad.values());
      e.backward(2.0, drow);
    }
    return ro.loss(cat);
  });
}

inline nn::GradCheckReport dropout_fixed_mask() {
  ParamStore store;
  Rng rng(6);
  Param* x = input(store, "x", 8, rng);
  Rng mrng(9);
  Vec mask;
  dropout_mask(8, 0.3, &mrng, mask);
  const Readout ro(8, rng);
  return run(store, [&](bool back) {
    Vec y(x->value.values().begin(), x->value.values().end());
    dropout_apply(mask, y);
    if (back) {
      Vec dy = ro.r;
      dropout_backward(mask, dy);
      for (std::size_t i = 0; i < 8; ++i) x->grad[i] += dy[i];
    }
    return ro.loss(y);
  });
}

inline nn::GradCheckReport lstm_unrolled() {
  ParamStore store;
  Rng rng(7);
  const std::size_t in = 3, H = 4, T = 4;
  const Lstm l = Lstm::create(store, "lstm", in, H, rng);
  std::vector<Param*> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(input(store, "x" + std::to_string(t), in, rng));
  std::vector<Readout> ro;
  for (std::size_t t = 0; t < T; ++t) ro.emplace_back(H, rng);
  const Readout roc(H, rng);
  return run(store, [&](bool back) {
    std::vector<Lstm::Step> steps(T);
    Vec h(H, 0.0), c(H, 0.0);
    double loss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      l.step(xs[t]->value.values(), h, c, steps[t]);
      h = steps[t].h;
      c = steps[t].c;
      loss += ro[t].loss(h);
    }
    loss += roc.loss(c);
    if (back) {
      Vec dh(H, 0.0), dc = roc.r, dz;
      for (std::size_t t = T; t-- > 0;) {
        for (std::size_t u = 0; u < H; ++u) dh[u] += ro[t].r[u];
        Vec dh_prev(H, 0.0), dc_prev(H, 0.0);
        l.backward(steps[t], dh, dc, xs[t]->grad.values(), dh_prev, dc_prev, dz);
        dh = dh_prev;
        dc = dc_prev;
      }
    }
    return loss;
  });
}

inline nn::GradCheckReport masked_attention() {
  ParamStore store;
  Rng rng(8);
  const std::size_t d = 6, heads = 3, nq = 2, n = 5;
  const auto att = InterpretableAttention::create(store, "att", d, heads, rng);
  Param* xq = input(store, "xq", nq * d, rng);
  Param* xk = input(store, "xk", n * d, rng);
  std::vector<char> mask(nq * n, 1);
  mask[0 * n + 4] = 0;  // causal-style holes
  mask[1 * n + 0] = 0;
  const Readout ro(nq * d, rng);
  return run(store, [&](bool back) {
    Vec out(nq * d);
    InterpretableAttention::Cache c;
    att.forward(xq->value.values(), xk->value.values(), mask, out, c);
    if (back) att.backward(xq->value.values(), xk->value.values(), c, ro.r, xq->grad.values(), xk->grad.values());
    return ro.loss(out);
  });
}

inline nn::GradCheckReport grn() {
  ParamStore store;
  Rng rng(10);
  const auto g = tft::Grn::create(store, "grn", 4, 5, 3, 2, 1);
  Param* x = input(store, "x", 4, rng);
  Param* c = input(store, "c", 2, rng);
  const Readout ro(3, rng);
  return run(store, [&](bool back) {
    Vec y(3);
    tft::Grn::Cache k;
    g.forward(x->value.values(), c->value.values(), y, k, nullptr, 0.0);
    if (back) g.backward(x->value.values(), c->value.values(), k, ro.r, x->grad.values(), c->grad.values());
    return ro.loss(y);
  });
}

inline nn::GradCheckReport variable_selection() {
  ParamStore store;
  Rng rng(11);
  const std::size_t d = 3;
  const auto v = tft::Vsn::create(store, "vsn", {"a", "b", "c"}, d, 2, 4);
  Param* xi = input(store, "xi", 3 * d, rng);
  Param* c = input(store, "c", 2, rng);
  const Readout ro(d, rng);
  return run(store, [&](bool back) {
    Vec y(d);
    tft::Vsn::Cache k;
    v.forward(xi->value.values(), c->value.values(), y, k, nullptr, 0.0);
    if (back) v.backward(xi->value.values(), c->value.values(), k, ro.r, xi->grad.values(), c->grad.values());
    return ro.loss(y);
  });
}

struct Case {
  std::string name;
  std::function<GradCheckReport()> run;
};

inline const std::vector<Case>& primitives() {
  static const std::vector<Case> cases = {
      {"dense", dense},
      {"elu_softmax", elu_softmax},
      {"glu", glu},
      {"layer_norm", layer_norm},
      {"embedding_mul_add_concat", embedding_mul_add_concat},
      {"dropout_fixed_mask", dropout_fixed_mask},
      {"lstm_unrolled", lstm_unrolled},
      {"masked_attention", masked_attention},
      {"grn", grn},
      {"variable_selection", variable_selection},
  };
  return cases;
}

// Whole-model check on a micro TFT: two sites, width 4, two heads, no dropout.
inline std::vector<SiteSeries> two_sites(std::size_t hours) {
  return {testutil::tiny_site("S1", hours, 1, "ENF"), testutil::tiny_site("S2", hours, 2, "GRA")};
}

inline tft::TftConfig micro_config(int k, int tau) {
  tft::TftConfig cfg;
  cfg.hidden_size = 4;
  cfg.n_heads = 2;
  cfg.encoder_length = k;
  cfg.decoder_length = tau;
  cfg.dropout = 0.0;
  cfg.seed = 3;
  return cfg;
}

// Mean pinball loss over every decoder position of `wins`, with gradients when asked.
inline double windows_loss(const tft::TftModel& model, const std::vector<Window>& wins, bool backward) {
  const auto& q = model.config().quantiles;
  std::size_t count = 0;
  for (const auto& w : wins) count += w.label.size() * q.size();
  tft::Workspace ws;
  double total = 0.0;
  for (const auto& w : wins) {
    model.forward(w, ws);
    std::vector<double> dq(ws.output.quantiles.size(), 0.0);
    for (std::size_t p = 0; p < w.label.size(); ++p) {
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double yhat = ws.output.quantile(p, j);
        total += nn::quantile_loss(w.label[p], yhat, q[j]);
        dq[p * q.size() + j] = nn::quantile_loss_grad(w.label[p], yhat, q[j]) / static_cast<double>(count);
      }
    }
    if (backward) model.backward(w, ws, dq);
  }
  return total / static_cast<double>(count);
}

inline nn::GradCheckReport full_tft(int k, int tau) {
  const auto sites = two_sites(static_cast<std::size_t>(k + tau + 4));
  const auto cat = testutil::tiny_catalog();
  const auto stats = fit_norm_stats(sites, cat);
  const auto cfg = micro_config(k, tau);
  const auto set = build_windows(sites, cfg.window_spec(), cat, TargetHistoryMode::observed, 4, stats);
  if (set.size() < 2) throw std::logic_error("full_tft: too few windows");
  tft::TftModel model(cfg, cat, stats);
  const std::vector<Window> wins = {set.get(0), set.get(set.size() - 1)};
  nn::GradCheckOptions opt;
  opt.tolerance = kModelTol;
  return nn::gradient_check(
      model.params(), [&] { return windows_loss(model, wins, false); }, [&] { return windows_loss(model, wins, true); },
      opt);
}

}  // namespace gradcases
