#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fluxtft/nn/attention.hpp"
#include "fluxtft/nn/lstm.hpp"
#include "fluxtft/nn/params.hpp"
#include "fluxtft/tft/config.hpp"
#include "fluxtft/tft/layers.hpp"
#include "fluxtft/windows.hpp"

namespace fluxtft::tft {

/// Forward results for one window.
struct TftOutput {
  std::size_t decoder_length = 0;
  std::size_t n_quantiles = 0;
  std::size_t heads = 0;
  std::size_t n_positions = 0;  // k + tau
  Vec quantiles;        // tau x |Q|, normalized units, non-decreasing per row
  Vec attention;        // heads x tau x (k + tau)
  Vec encoder_weights;  // k x m_enc
  Vec decoder_weights;  // tau x m_dec
  Vec static_weights;   // m_s

  double quantile(std::size_t pos, std::size_t q) const { return quantiles[pos * n_quantiles + q]; }
  double attn(std::size_t head, std::size_t pos, std::size_t key) const {
    return attention[(head * decoder_length + pos) * n_positions + key];
  }
};

/// Intermediate values of one forward pass, kept for the backward pass and
/// reused across windows to avoid reallocation.
struct Workspace {
  Vec xi_s, s;
  Vsn::Cache static_vsn;
  Vec cs, ce, ch, cc;
  Grn::Cache g_cs, g_ce, g_ch, g_cc;
  std::vector<Vec> xi;                // per position, m x d
  std::vector<Vsn::Cache> vsn;        // per position
  Vec x;                              // (k+tau) x d selected inputs
  std::vector<nn::Lstm::Step> steps;  // per position
  std::vector<nn::Glu::Cache> lstm_glu;
  std::vector<nn::LayerNorm::Cache> lstm_norm;
  Vec lstm_gated, phi;  // (k+tau) x d
  std::vector<Grn::Cache> enrich;
  Vec theta;  // (k+tau) x d
  nn::InterpretableAttention::Cache attn;
  Vec attn_out;  // tau x d
  std::vector<nn::Glu::Cache> attn_glu;
  std::vector<nn::LayerNorm::Cache> attn_norm;
  Vec attn_gated, delta;  // tau x d
  std::vector<Grn::Cache> pos;
  Vec psi;  // tau x d
  std::vector<nn::Glu::Cache> out_glu;
  std::vector<nn::LayerNorm::Cache> out_norm;
  Vec out_gated, psi_tilde;  // tau x d
  std::vector<char> mask;    // tau x (k+tau) causal attention mask
  Vec raw;                   // tau x |Q| before sorting
  std::vector<std::size_t> order;
  TftOutput output;
};

/// The Temporal Fusion Transformer. Parameter shapes are fixed by the config
/// and the channel layout derived from the catalog and target-history mode.
class TftModel {
 public:
  TftModel(TftConfig cfg, FeatureCatalog catalog, NormStats stats)
      : cfg_(std::move(cfg)), catalog_(std::move(catalog)), stats_(std::move(stats)) {
    cfg_.validate();
    layout_ = make_layout(catalog_, stats_, cfg_.target_history_mode);
    build();
  }

  TftModel(const TftModel&) = delete;
  TftModel& operator=(const TftModel&) = delete;
  TftModel(TftModel&&) = default;
  TftModel& operator=(TftModel&&) = default;

  const TftConfig& config() const { return cfg_; }
  const FeatureCatalog& catalog() const { return catalog_; }
  const NormStats& stats() const { return stats_; }
  const InputLayout& layout() const { return layout_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  /// Verifies that a window set was built for this model's inputs.
  void check(const WindowSet& set) const {
    const WindowSpec& s = set.spec();
    if (s.encoder_length != cfg_.encoder_length || s.decoder_length != cfg_.decoder_length) {
      throw UsageError("tft: window spec (k=" + std::to_string(s.encoder_length) + ", tau=" +
                       std::to_string(s.decoder_length) + ") does not match the model (k=" +
                       std::to_string(cfg_.encoder_length) + ", tau=" + std::to_string(cfg_.decoder_length) + ")");
    }
    auto same = [](const std::vector<Channel>& a, const std::vector<Channel>& b) {
      return InputLayout::names(a) == InputLayout::names(b);
    };
    const InputLayout& l = set.layout();
    if (!same(l.encoder, layout_.encoder) || !same(l.decoder, layout_.decoder) || !same(l.statics, layout_.statics)) {
      throw UsageError("tft: window channels do not match the model's input layout");
    }
  }

  /// Runs the network on one window. Dropout is active iff `drop` is given.
  void forward(const Window& w, Workspace& ws, Rng* drop = nullptr) const {
    const std::size_t k = static_cast<std::size_t>(cfg_.encoder_length);
    const std::size_t tau = static_cast<std::size_t>(cfg_.decoder_length);
    const std::size_t n = k + tau, d = width(), me = layout_.encoder.size(), md = layout_.decoder.size(),
                      ms = layout_.statics.size(), nq = cfg_.quantiles.size();
    if (w.encoder_length != cfg_.encoder_length || w.decoder_length != cfg_.decoder_length) {
      throw UsageError("tft: window length does not match the model");
    }
    if (w.encoder.size() != k * me || w.decoder.size() != tau * md || w.statics.size() != ms) {
      throw UsageError("tft: window channel count does not match the model");
    }
    const double p = drop ? cfg_.dropout : 0.0;

    // static covariate encoders
    ws.xi_s.resize(ms * d);
    for (std::size_t j = 0; j < ms; ++j) transforms_[static_tf_[j]].forward(w.statics[j], slice(ws.xi_s, j, d));
    ws.s.resize(d);
    static_vsn_.forward(ws.xi_s, {}, ws.s, ws.static_vsn, drop, p);
    for (Vec* v : {&ws.cs, &ws.ce, &ws.ch, &ws.cc}) v->resize(d);
    ctx_select_.forward(ws.s, {}, ws.cs, ws.g_cs, drop, p);
    ctx_enrich_.forward(ws.s, {}, ws.ce, ws.g_ce, drop, p);
    ctx_h_.forward(ws.s, {}, ws.ch, ws.g_ch, drop, p);
    ctx_c_.forward(ws.s, {}, ws.cc, ws.g_cc, drop, p);

    // variable selection per position
    ws.xi.resize(n);
    ws.vsn.resize(n);
    ws.x.resize(n * d);
    for (std::size_t t = 0; t < n; ++t) {
      const bool enc = t < k;
      const std::size_t m = enc ? me : md;
      const double* row = enc ? &w.encoder[t * me] : &w.decoder[(t - k) * md];
      const auto& tf = enc ? enc_tf_ : dec_tf_;
      ws.xi[t].resize(m * d);
      for (std::size_t j = 0; j < m; ++j) transforms_[tf[j]].forward(row[j], slice(ws.xi[t], j, d));
      (enc ? enc_vsn_ : dec_vsn_).forward(ws.xi[t], ws.cs, slice(ws.x, t, d), ws.vsn[t], drop, p);
    }

    // sequence layer
    ws.steps.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      CSpan h0 = t == 0 ? CSpan(ws.ch) : CSpan(ws.steps[t - 1].h);
      CSpan c0 = t == 0 ? CSpan(ws.cc) : CSpan(ws.steps[t - 1].c);
      (t < k ? lstm_enc_ : lstm_dec_).step(slice(ws.x, t, d), h0, c0, ws.steps[t]);
    }
    ws.lstm_glu.resize(n);
    ws.lstm_norm.resize(n);
    ws.lstm_gated.resize(n * d);
    ws.phi.resize(n * d);
    ws.enrich.resize(n);
    ws.theta.resize(n * d);
    for (std::size_t t = 0; t < n; ++t) {
      gate_norm(lstm_glu_, lstm_norm_, ws.steps[t].h, slice(ws.x, t, d), slice(ws.lstm_gated, t, d),
                slice(ws.phi, t, d), ws.lstm_glu[t], ws.lstm_norm[t]);
      enrich_.forward(slice(ws.phi, t, d), ws.ce, slice(ws.theta, t, d), ws.enrich[t], drop, p);
    }

    // attention over all positions, queried at decoder positions
    ws.mask.assign(tau * n, 0);
    for (std::size_t i = 0; i < tau; ++i) {
      for (std::size_t j = 0; j <= k + i; ++j) ws.mask[i * n + j] = 1;
    }
    ws.attn_out.resize(tau * d);
    attention_.forward(CSpan(ws.theta).subspan(k * d, tau * d), ws.theta, ws.mask, ws.attn_out, ws.attn);

    ws.attn_glu.resize(tau);
    ws.attn_norm.resize(tau);
    ws.attn_gated.resize(tau * d);
    ws.delta.resize(tau * d);
    ws.pos.resize(tau);
    ws.psi.resize(tau * d);
    ws.out_glu.resize(tau);
    ws.out_norm.resize(tau);
    ws.out_gated.resize(tau * d);
    ws.psi_tilde.resize(tau * d);
    ws.raw.resize(tau * nq);
    ws.order.resize(tau * nq);
    TftOutput& o = ws.output;
    o.decoder_length = tau;
    o.n_quantiles = nq;
    o.heads = attention_.heads;
    o.n_positions = n;
    o.quantiles.resize(tau * nq);
    for (std::size_t i = 0; i < tau; ++i) {
      gate_norm(attn_glu_, attn_norm_, slice(ws.attn_out, i, d), slice(ws.theta, k + i, d), slice(ws.attn_gated, i, d),
                slice(ws.delta, i, d), ws.attn_glu[i], ws.attn_norm[i]);
      positionwise_.forward(slice(ws.delta, i, d), {}, slice(ws.psi, i, d), ws.pos[i], drop, p);
      gate_norm(out_glu_, out_norm_, slice(ws.psi, i, d), slice(ws.phi, k + i, d), slice(ws.out_gated, i, d),
                slice(ws.psi_tilde, i, d), ws.out_glu[i], ws.out_norm[i]);
      head_.forward(slice(ws.psi_tilde, i, d), MSpan(ws.raw).subspan(i * nq, nq));
      auto ord = std::span(ws.order).subspan(i * nq, nq);
      std::iota(ord.begin(), ord.end(), std::size_t{0});
      std::stable_sort(ord.begin(), ord.end(),
                       [&](std::size_t a, std::size_t b) { return ws.raw[i * nq + a] < ws.raw[i * nq + b]; });
      for (std::size_t q = 0; q < nq; ++q) o.quantiles[i * nq + q] = ws.raw[i * nq + ord[q]];
    }

    o.attention = ws.attn.a;
    o.encoder_weights.resize(k * me);
    o.decoder_weights.resize(tau * md);
    for (std::size_t t = 0; t < n; ++t) {
      if (t < k) {
        std::copy(ws.vsn[t].weights.begin(), ws.vsn[t].weights.end(), o.encoder_weights.begin() + t * me);
      } else {
        std::copy(ws.vsn[t].weights.begin(), ws.vsn[t].weights.end(), o.decoder_weights.begin() + (t - k) * md);
      }
    }
    o.static_weights = ws.static_vsn.weights;
  }

  /// Backpropagates dL/d(sorted quantile outputs) (tau x |Q|) from the last
  /// forward pass on `w`, accumulating parameter gradients.
  void backward(const Window& w, Workspace& ws, CSpan dq) const {
    const std::size_t k = static_cast<std::size_t>(cfg_.encoder_length);
    const std::size_t tau = static_cast<std::size_t>(cfg_.decoder_length);
    const std::size_t n = k + tau, d = width(), me = layout_.encoder.size(), md = layout_.decoder.size(),
                      ms = layout_.statics.size(), nq = cfg_.quantiles.size();
    if (dq.size() != tau * nq) throw UsageError("tft backward: gradient shape mismatch");

    Vec dphi(n * d, 0.0), dtheta(n * d, 0.0), dx(n * d, 0.0);
    Vec dcs(d, 0.0), dce(d, 0.0), dch(d, 0.0), dcc(d, 0.0), ds(d, 0.0);
    Vec draw(nq), dpsit(d), dpsi(d), ddelta(d), dattn(tau * d, 0.0);
    for (std::size_t i = 0; i < tau; ++i) {
      for (std::size_t q = 0; q < nq; ++q) draw[ws.order[i * nq + q]] = dq[i * nq + q];
      std::fill(dpsit.begin(), dpsit.end(), 0.0);
      head_.backward(slice(ws.psi_tilde, i, d), draw, dpsit);
      std::fill(dpsi.begin(), dpsi.end(), 0.0);
      gate_norm_backward(out_glu_, out_norm_, slice(ws.psi, i, d), ws.out_glu[i], ws.out_norm[i], d, dpsit, dpsi, slice(dphi, k + i, d));
      std::fill(ddelta.begin(), ddelta.end(), 0.0);
      positionwise_.backward(slice(ws.delta, i, d), {}, ws.pos[i], dpsi, ddelta, {});
      gate_norm_backward(attn_glu_, attn_norm_, slice(ws.attn_out, i, d), ws.attn_glu[i], ws.attn_norm[i], d, ddelta, slice(dattn, i, d), slice(dtheta, k + i, d));
    }
    {
      Vec dq_in(tau * d, 0.0);
      attention_.backward(CSpan(ws.theta).subspan(k * d, tau * d), ws.theta, ws.attn, dattn, dq_in, dtheta);
      for (std::size_t t = 0; t < tau * d; ++t) dtheta[k * d + t] += dq_in[t];
    }

    Vec dh_lstm(n * d, 0.0);
    for (std::size_t t = n; t-- > 0;) {
      enrich_.backward(slice(ws.phi, t, d), ws.ce, ws.enrich[t], slice(dtheta, t, d), slice(dphi, t, d), dce);
      gate_norm_backward(lstm_glu_, lstm_norm_, ws.steps[t].h, ws.lstm_glu[t], ws.lstm_norm[t], d,
                         slice(dphi, t, d), slice(dh_lstm, t, d), slice(dx, t, d));
    }

    Vec dh(d, 0.0), dc(d, 0.0), dh_prev(d), dc_prev(d), dz;
    for (std::size_t t = n; t-- > 0;) {
      for (std::size_t u = 0; u < d; ++u) dh[u] += dh_lstm[t * d + u];
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      std::fill(dc_prev.begin(), dc_prev.end(), 0.0);
      (t < k ? lstm_enc_ : lstm_dec_).backward(ws.steps[t], dh, dc, slice(dx, t, d), dh_prev, dc_prev, dz);
      dh.swap(dh_prev);
      dc.swap(dc_prev);
    }
    add_into(dh, dch);
    add_into(dc, dcc);

    for (std::size_t t = 0; t < n; ++t) {
      const bool enc = t < k;
      const std::size_t m = enc ? me : md;
      const double* row = enc ? &w.encoder[t * me] : &w.decoder[(t - k) * md];
      const auto& tf = enc ? enc_tf_ : dec_tf_;
      Vec dxi(m * d, 0.0);
      (enc ? enc_vsn_ : dec_vsn_).backward(ws.xi[t], ws.cs, ws.vsn[t], slice(dx, t, d), dxi, dcs);
      for (std::size_t j = 0; j < m; ++j) transforms_[tf[j]].backward(row[j], CSpan(dxi).subspan(j * d, d));
    }

    ctx_select_.backward(ws.s, {}, ws.g_cs, dcs, ds, {});
    ctx_enrich_.backward(ws.s, {}, ws.g_ce, dce, ds, {});
    ctx_h_.backward(ws.s, {}, ws.g_ch, dch, ds, {});
    ctx_c_.backward(ws.s, {}, ws.g_cc, dcc, ds, {});
    Vec dxi_s(ms * d, 0.0);
    static_vsn_.backward(ws.xi_s, {}, ws.static_vsn, ds, dxi_s, {});
    for (std::size_t j = 0; j < ms; ++j) transforms_[static_tf_[j]].backward(w.statics[j], CSpan(dxi_s).subspan(j * d, d));
  }

 private:
  std::size_t width() const { return static_cast<std::size_t>(cfg_.hidden_size); }

  static MSpan slice(Vec& v, std::size_t i, std::size_t d) { return MSpan(v).subspan(i * d, d); }

  /// y = LayerNorm(residual + GLU(x)); `sum` receives the pre-norm value.
  static void gate_norm(const nn::Glu& g, const nn::LayerNorm& ln, CSpan x, CSpan residual, MSpan sum, MSpan y,
                        nn::Glu::Cache& gc, nn::LayerNorm::Cache& lc) {
    g.forward(x, sum, gc);
    add_into(residual, sum);
    ln.forward(sum, y, lc);
  }

  static void gate_norm_backward(const nn::Glu& g, const nn::LayerNorm& ln, CSpan x, const nn::Glu::Cache& gc,
                                 const nn::LayerNorm::Cache& lc, std::size_t d, CSpan dy, MSpan dx, MSpan dresidual) {
    Vec dsum(d, 0.0), scratch;
    ln.backward(lc, dy, dsum);
    add_into(dsum, dresidual);
    g.backward(x, gc, dsum, dx, scratch);
  }

  void build() {
    const std::size_t d = width();
    const std::uint64_t seed = cfg_.seed;
    auto transform_index = [&](const Channel& ch) {
      const auto it = tf_index_.find(ch.name);
      if (it != tf_index_.end()) return it->second;
      transforms_.push_back(InputTransform::create(store_, ch, d, seed));
      tf_index_[ch.name] = transforms_.size() - 1;
      return transforms_.size() - 1;
    };
    for (const auto& c : layout_.statics) static_tf_.push_back(transform_index(c));
    for (const auto& c : layout_.encoder) enc_tf_.push_back(transform_index(c));
    for (const auto& c : layout_.decoder) dec_tf_.push_back(transform_index(c));

    static_vsn_ = Vsn::create(store_, "static_vsn", InputLayout::names(layout_.statics), d, 0, seed);
    ctx_select_ = Grn::create(store_, "context.selection", d, d, d, 0, seed);
    ctx_enrich_ = Grn::create(store_, "context.enrichment", d, d, d, 0, seed);
    ctx_h_ = Grn::create(store_, "context.state_h", d, d, d, 0, seed);
    ctx_c_ = Grn::create(store_, "context.state_c", d, d, d, 0, seed);
    enc_vsn_ = Vsn::create(store_, "encoder_vsn", InputLayout::names(layout_.encoder), d, d, seed);
    dec_vsn_ = Vsn::create(store_, "decoder_vsn", InputLayout::names(layout_.decoder), d, d, seed);
    {
      Rng r = component_rng(seed, "lstm.encoder");
      lstm_enc_ = nn::Lstm::create(store_, "lstm.encoder", d, d, r);
    }
    {
      Rng r = component_rng(seed, "lstm.decoder");
      lstm_dec_ = nn::Lstm::create(store_, "lstm.decoder", d, d, r);
    }
    {
      Rng r = component_rng(seed, "post_lstm");
      lstm_glu_ = nn::Glu::create(store_, "post_lstm.glu", d, d, r);
      lstm_norm_ = nn::LayerNorm::create(store_, "post_lstm.norm", d);
    }
    enrich_ = Grn::create(store_, "enrichment", d, d, d, d, seed);
    {
      Rng r = component_rng(seed, "attention");
      attention_ = nn::InterpretableAttention::create(store_, "attention", d, static_cast<std::size_t>(cfg_.n_heads), r);
    }
    {
      Rng r = component_rng(seed, "post_attention");
      attn_glu_ = nn::Glu::create(store_, "post_attention.glu", d, d, r);
      attn_norm_ = nn::LayerNorm::create(store_, "post_attention.norm", d);
    }
    positionwise_ = Grn::create(store_, "positionwise", d, d, d, 0, seed);
    {
      Rng r = component_rng(seed, "output_gate");
      out_glu_ = nn::Glu::create(store_, "output_gate.glu", d, d, r);
      out_norm_ = nn::LayerNorm::create(store_, "output_gate.norm", d);
    }
    {
      Rng r = component_rng(seed, "quantile_head");
      head_ = nn::Dense::create(store_, "quantile_head", d, cfg_.quantiles.size(), r);
    }
  }

  TftConfig cfg_;
  FeatureCatalog catalog_;
  NormStats stats_;
  InputLayout layout_;
  nn::ParamStore store_;

  std::vector<InputTransform> transforms_;
  std::map<std::string, std::size_t> tf_index_;
  std::vector<std::size_t> static_tf_, enc_tf_, dec_tf_;
  Vsn static_vsn_, enc_vsn_, dec_vsn_;
  Grn ctx_select_, ctx_enrich_, ctx_h_, ctx_c_;
  nn::Lstm lstm_enc_, lstm_dec_;
  nn::Glu lstm_glu_;
  nn::LayerNorm lstm_norm_;
  Grn enrich_;
  nn::InterpretableAttention attention_;
  nn::Glu attn_glu_;
  nn::LayerNorm attn_norm_;
  Grn positionwise_;
  nn::Glu out_glu_;
  nn::LayerNorm out_norm_;
  nn::Dense head_;
};

}  // namespace fluxtft::tft
