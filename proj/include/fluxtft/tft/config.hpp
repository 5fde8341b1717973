#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/windows.hpp"

namespace fluxtft::tft {

struct TftConfig {
  int hidden_size = 16;
  int n_heads = 4;
  double dropout = 0.1;
  std::vector<double> quantiles{0.1, 0.5, 0.9};
  int encoder_length = 24 * 7;
  int decoder_length = 1;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  TargetHistoryMode target_history_mode = TargetHistoryMode::observed;
  double clip_norm = 1.0;  // 0 disables clipping
  bool include_gap_labels = false;
  int train_stride = 1;  // spacing between training window origins
  int eval_stride = 1;   // spacing used for validation loss

  WindowSpec window_spec() const { return {encoder_length, decoder_length, decoder_length}; }

  /// Index of the 0.5 quantile; falls back to the middle level.
  std::size_t median_index() const {
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
      if (quantiles[i] == 0.5) return i;
    }
    return quantiles.size() / 2;
  }

  void validate() const {
    if (hidden_size < 1) throw UsageError("tft config: hidden_size must be >= 1");
    if (n_heads < 1 || hidden_size % n_heads != 0) {
      throw UsageError("tft config: hidden_size " + std::to_string(hidden_size) + " is not divisible by n_heads " +
                       std::to_string(n_heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("tft config: dropout must lie in [0, 1)");
    if (quantiles.empty()) throw UsageError("tft config: quantiles must not be empty");
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
      if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0)) throw UsageError("tft config: quantiles must lie in (0, 1)");
      if (i > 0 && !(quantiles[i] > quantiles[i - 1])) throw UsageError("tft config: quantiles must be increasing");
    }
    window_spec().validate();
    if (!(learning_rate > 0.0)) throw UsageError("tft config: learning_rate must be positive");
    if (batch_size < 1) throw UsageError("tft config: batch_size must be >= 1");
    if (max_epochs < 0) throw UsageError("tft config: max_epochs must be >= 0");
    if (early_stop_patience < 1) throw UsageError("tft config: early_stop_patience must be >= 1");
    if (clip_norm < 0.0) throw UsageError("tft config: clip_norm must be >= 0");
    if (train_stride < 1 || eval_stride < 1) throw UsageError("tft config: strides must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"hidden_size", hidden_size},
            {"n_heads", n_heads},
            {"dropout", dropout},
            {"quantiles", quantiles},
            {"encoder_length", encoder_length},
            {"decoder_length", decoder_length},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"early_stop_patience", early_stop_patience},
            {"seed", seed},
            {"target_history_mode", mode_name(target_history_mode)},
            {"clip_norm", clip_norm},
            {"include_gap_labels", include_gap_labels},
            {"train_stride", train_stride},
            {"eval_stride", eval_stride}};
  }

  static TftConfig from_json(const nlohmann::json& j, TftConfig c) {
    if (!j.is_object()) throw UsageError("tft config: expected an object");
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.dropout = j.value("dropout", c.dropout);
    c.quantiles = j.value("quantiles", c.quantiles);
    c.encoder_length = j.value("encoder_length", c.encoder_length);
    c.decoder_length = j.value("decoder_length", c.decoder_length);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("target_history_mode")) c.target_history_mode = parse_mode(j["target_history_mode"].get<std::string>());
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.include_gap_labels = j.value("include_gap_labels", c.include_gap_labels);
    c.train_stride = j.value("train_stride", c.train_stride);
    c.eval_stride = j.value("eval_stride", c.eval_stride);
    c.validate();
    return c;
  }

  static TftConfig from_json(const nlohmann::json& j) { return from_json(j, TftConfig{}); }
};

}  // namespace fluxtft::tft
