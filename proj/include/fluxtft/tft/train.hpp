#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/nn/adam.hpp"
#include "fluxtft/nn/loss.hpp"
#include "fluxtft/tft/model.hpp"

namespace fluxtft::tft {

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty without a validation set
  int best_epoch = -1;           // 0-based
  int epochs_run = 0;
  bool early_stopped = false;

  nlohmann::json to_json() const {
    return {{"train_loss", train_loss},
            {"val_loss", val_loss},
            {"best_epoch", best_epoch},
            {"epochs_run", epochs_run},
            {"early_stopped", early_stopped}};
  }
};

struct TrainOptions {
  /// Called after each epoch with (epoch, train loss, val loss or NaN).
  std::function<void(int, double, double)> on_epoch;
};

/// Pinball loss of the current outputs in `ws` against the window labels and
/// optionally its gradient (scaled by `scale`) into `dq`. Returns the summed
/// loss and adds the number of labels used to `count`.
inline double window_loss(const TftConfig& cfg, const Window& w, const TftOutput& out, double scale, Vec* dq,
                          std::size_t& count) {
  const std::size_t nq = cfg.quantiles.size();
  if (dq) dq->assign(out.quantiles.size(), 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < out.decoder_length; ++p) {
    if (w.label_gap[p] && !cfg.include_gap_labels) continue;
    ++count;
    for (std::size_t q = 0; q < nq; ++q) {
      const double yhat = out.quantile(p, q);
      total += nn::quantile_loss(w.label[p], yhat, cfg.quantiles[q]);
      if (dq) (*dq)[p * nq + q] = scale * nn::quantile_loss_grad(w.label[p], yhat, cfg.quantiles[q]);
    }
  }
  return total;
}

inline std::size_t usable_labels(const TftConfig& cfg, const Window& w) {
  if (cfg.include_gap_labels) return w.label.size();
  std::size_t n = 0;
  for (auto g : w.label_gap) n += g ? 0 : 1;
  return n;
}

/// Mean pinball loss over all usable labels of a window set, dropout off.
inline double mean_loss(const TftModel& model, const WindowSet& set) {
  model.check(set);
  Workspace ws;
  Window w;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : set.refs()) {
    set.fill(r, w);
    model.forward(w, ws);
    total += window_loss(model.config(), w, ws.output, 1.0, nullptr, count);
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return total / static_cast<double>(count * model.config().quantiles.size());
}

/// Mini-batch Adam on the mean pinball loss with early stopping on the
/// validation loss. The best parameters (by validation loss when available)
/// are restored at the end. Deterministic for a given config seed.
inline TrainHistory train(TftModel& model, const WindowSet& train_set, const WindowSet* val_set,
                          const TrainOptions& opt = {}) {
  const TftConfig& cfg = model.config();
  model.check(train_set);
  if (val_set) {
    model.check(*val_set);
    for (const auto& a : train_set.series()) {
      for (const auto& b : val_set->series()) {
        if (a.site_id == b.site_id) throw UsageError("train: site " + a.site_id + " is in both training and validation");
      }
    }
  }
  if (train_set.size() == 0) throw DataError("train: no training windows");

  nn::ParamStore& store = model.params();
  nn::AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.clip_norm};
  TrainHistory hist;
  std::vector<double> best = store.snapshot();
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  Workspace ws;
  std::vector<Window> batch(static_cast<std::size_t>(cfg.batch_size));
  Vec dq;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const std::vector<double> epoch_start = store.snapshot();
    auto diverged = [&](const std::string& why) {
      store.restore(epoch_start);
      throw DivergenceError("train: " + why + " in epoch " + std::to_string(epoch) +
                            "; parameters restored to the start of the epoch");
    };
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(Rng::derive(cfg.seed, 2 * static_cast<std::uint64_t>(epoch)));
    Rng drop(Rng::derive(cfg.seed, 2 * static_cast<std::uint64_t>(epoch) + 1));
    shuffle.shuffle(order);

    double epoch_total = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch.size()) {
      const std::size_t nb = std::min(batch.size(), order.size() - b0);
      std::size_t labels = 0;
      for (std::size_t i = 0; i < nb; ++i) {
        train_set.fill(train_set.ref(order[b0 + i]), batch[i]);
        labels += usable_labels(cfg, batch[i]);
      }
      if (labels == 0) continue;
      const double scale = 1.0 / static_cast<double>(labels * cfg.quantiles.size());
      store.zero_grad();
      double batch_total = 0.0;
      std::size_t counted = 0;
      for (std::size_t i = 0; i < nb; ++i) {
        model.forward(batch[i], ws, cfg.dropout > 0 ? &drop : nullptr);
        batch_total += window_loss(cfg, batch[i], ws.output, scale, &dq, counted);
        model.backward(batch[i], ws, dq);
      }
      if (!std::isfinite(batch_total)) diverged("non-finite loss");
      try {
        nn::adam_step(store, adam);
      } catch (const DivergenceError& e) {
        diverged(e.what());
      }
      epoch_total += batch_total;
      epoch_count += counted;
    }
    const double train_loss = epoch_total / static_cast<double>(std::max<std::size_t>(epoch_count, 1) * cfg.quantiles.size());
    hist.train_loss.push_back(train_loss);
    double monitored = train_loss;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (val_set && val_set->size() > 0) {
      val_loss = mean_loss(model, *val_set);
      hist.val_loss.push_back(val_loss);
      monitored = val_loss;
    }
    if (!std::isfinite(monitored)) diverged("non-finite monitored loss");
    hist.epochs_run = epoch + 1;
    if (opt.on_epoch) opt.on_epoch(epoch, train_loss, val_loss);
    if (monitored < best_loss) {
      best_loss = monitored;
      best = store.snapshot();
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      hist.early_stopped = true;
      break;
    }
  }
  if (hist.best_epoch >= 0) store.restore(best);
  return hist;
}

/// One row per (window, decoder position).
struct Prediction {
  std::vector<std::string> site_id;
  std::vector<Timestamp> time;
  std::vector<double> point;     // median quantile, physical units
  std::vector<double> observed;  // physical units
  std::vector<std::uint8_t> gap_flag;
  std::vector<double> quantiles;  // rows x |Q|, physical units
  std::vector<TftOutput> outputs;  // per window, only when captured
  std::vector<std::size_t> window_of_row;

  std::size_t size() const { return point.size(); }
};

using OutputSink = std::function<void(const Window&, const TftOutput&)>;

/// Runs the model over every window of `set` in eval mode. Outputs are kept
/// when `capture` is set and streamed to `sink` when one is given.
inline Prediction predict(const TftModel& model, const WindowSet& set, bool capture = false,
                          const OutputSink& sink = {}) {
  model.check(set);
  const TftConfig& cfg = model.config();
  const NormStats& stats = model.stats();
  const std::size_t nq = cfg.quantiles.size(), med = cfg.median_index();
  Prediction out;
  Workspace ws;
  Window w;
  for (std::size_t i = 0; i < set.size(); ++i) {
    set.fill(set.ref(i), w);
    model.forward(w, ws);
    for (std::size_t p = 0; p < ws.output.decoder_length; ++p) {
      out.site_id.push_back(w.site_id);
      out.time.push_back(w.origin + static_cast<Timestamp>(p));
      out.point.push_back(stats.target_inverse(ws.output.quantile(p, med)));
      out.observed.push_back(w.label_raw[p]);
      out.gap_flag.push_back(w.label_gap[p]);
      for (std::size_t q = 0; q < nq; ++q) out.quantiles.push_back(stats.target_inverse(ws.output.quantile(p, q)));
      out.window_of_row.push_back(i);
    }
    if (capture) out.outputs.push_back(ws.output);
    if (sink) sink(w, ws.output);
  }
  return out;
}

}  // namespace fluxtft::tft
