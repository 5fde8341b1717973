#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/dataset.hpp"

namespace fluxtft {

/// Source of the past-target channel in the encoder.
enum class TargetHistoryMode { observed, none, estimated };

NLOHMANN_JSON_SERIALIZE_ENUM(TargetHistoryMode, {{TargetHistoryMode::observed, "observed"},
                                                 {TargetHistoryMode::none, "none"},
                                                 {TargetHistoryMode::estimated, "estimated"}})

inline std::string mode_name(TargetHistoryMode m) {
  switch (m) {
    case TargetHistoryMode::observed: return "observed";
    case TargetHistoryMode::none: return "none";
    case TargetHistoryMode::estimated: return "estimated";
  }
  return "observed";
}

inline TargetHistoryMode parse_mode(std::string_view s) {
  if (s == "observed") return TargetHistoryMode::observed;
  if (s == "none") return TargetHistoryMode::none;
  if (s == "estimated") return TargetHistoryMode::estimated;
  throw UsageError("unknown target history mode '" + std::string(s) + "'");
}

struct WindowSpec {
  int encoder_length = 24 * 7;
  int decoder_length = 1;
  int max_horizon = 1;

  void validate() const {
    if (encoder_length < 1 || decoder_length < 1 || max_horizon < 1) {
      throw UsageError("window spec: lengths must be positive");
    }
    if (max_horizon < decoder_length) throw UsageError("window spec: max_horizon < decoder_length");
  }
};

/// Per-feature z-score statistics and categorical vocabularies, fit on
/// training sites only.
class NormStats {
 public:
  struct Moments {
    double mean = 0.0;
    double std = 1.0;
  };

  static constexpr double kStdFloor = 1e-8;

  std::map<std::string, Moments> real;
  /// category -> index; index 0 is reserved for unseen categories.
  std::map<std::string, std::map<std::string, int>> vocab;
  std::vector<std::string> warnings;

  const Moments& moments(const std::string& name) const {
    const auto it = real.find(name);
    if (it == real.end()) throw DataError("norm stats: no statistics for '" + name + "'");
    return it->second;
  }

  double forward(const std::string& name, double v) const {
    const auto& m = moments(name);
    return (v - m.mean) / m.std;
  }

  double inverse(const std::string& name, double z) const {
    const auto& m = moments(name);
    return z * m.std + m.mean;
  }

  double target_forward(double y) const { return forward(std::string(kTargetName), y); }
  double target_inverse(double z) const { return inverse(std::string(kTargetName), z); }

  int category_index(const std::string& name, const std::string& category) const {
    const auto it = vocab.find(name);
    if (it == vocab.end()) throw DataError("norm stats: no vocabulary for '" + name + "'");
    const auto c = it->second.find(category);
    return c == it->second.end() ? 0 : c->second;
  }

  /// Vocabulary size including the unknown slot.
  int vocab_size(const std::string& name) const {
    const auto it = vocab.find(name);
    if (it == vocab.end()) throw DataError("norm stats: no vocabulary for '" + name + "'");
    return static_cast<int>(it->second.size()) + 1;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "fluxtft-normstats";
    j["version"] = 1;
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [k, m] : real) r[k] = {{"mean", m.mean}, {"std", m.std}};
    j["real"] = r;
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [k, cats] : vocab) v[k] = cats;
    j["vocab"] = v;
    j["warnings"] = warnings;
    return j;
  }

  static NormStats from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "fluxtft-normstats") throw DataError("norm stats: bad format tag");
    NormStats s;
    for (const auto& [k, m] : j.at("real").items()) s.real[k] = {m.at("mean").get<double>(), m.at("std").get<double>()};
    for (const auto& [k, cats] : j.at("vocab").items()) s.vocab[k] = cats.get<std::map<std::string, int>>();
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
  }

  void save(const std::string& path) const { text::write_file(path, to_json().dump(2) + "\n"); }
  static NormStats load(const std::string& path) { return from_json(nlohmann::json::parse(text::read_file(path))); }
};

namespace detail {

struct Accum {
  double n = 0, mean = 0, m2 = 0;
  void add(double v) {
    if (std::isnan(v)) return;
    n += 1;
    const double d = v - mean;
    mean += d / n;
    m2 += d * (v - mean);
  }
};

inline std::string category_key(double code) { return text::format_double(code); }

}  // namespace detail

/// Fits z-score moments (population std, floored at 1e-8) and vocabularies
/// over every timestamp of the training sites.
inline NormStats fit_norm_stats(const std::vector<SiteSeries>& train, const FeatureCatalog& catalog) {
  NormStats stats;
  std::map<std::string, detail::Accum> acc;
  std::map<std::string, std::set<std::string>> cats;
  for (StaticField f : kStaticFields) {
    if (static_field_is_categorical(f)) cats[std::string(static_field_name(f))];
  }
  for (const auto& e : catalog.entries()) {
    if (e.kind == Kind::categorical) cats[e.name];
  }
  for (const auto& s : train) {
    for (StaticField f : kStaticFields) {
      const std::string name(static_field_name(f));
      if (static_field_is_categorical(f)) {
        cats[name].insert(static_category(s.statics, f));
      } else {
        acc[name].add(static_real(s.statics, f));
      }
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      acc[std::string(kTargetName)].add(s.target[i]);
      for (TimeFeature tf : kTimeFeatures) {
        if (tf == TimeFeature::relative_time_index) continue;
        acc[std::string(time_feature_name(tf))].add(calendar_value(tf, s.timestamps[i]));
      }
      for (std::size_t j = 0; j < catalog.size(); ++j) {
        const double v = s.features[j][i];
        if (catalog[j].kind == Kind::real) {
          acc[catalog[j].name].add(v);
        } else if (!std::isnan(v)) {
          cats[catalog[j].name].insert(detail::category_key(v));
        }
      }
    }
  }
  for (const auto& e : catalog.entries()) {
    if (e.kind == Kind::real) acc[e.name];
  }
  for (const auto& [name, a] : acc) {
    NormStats::Moments m;
    m.mean = a.n > 0 ? a.mean : 0.0;
    const double sd = a.n > 0 ? std::sqrt(a.m2 / a.n) : 0.0;
    if (!(sd >= NormStats::kStdFloor)) {
      stats.warnings.push_back("feature '" + name + "' is constant on the training split; std floored");
      m.std = NormStats::kStdFloor;
    } else {
      m.std = sd;
    }
    stats.real[name] = m;
  }
  for (const auto& [name, set] : cats) {
    auto& v = stats.vocab[name];
    int idx = 1;
    for (const auto& c : set) v[c] = idx++;
  }
  return stats;
}

/// Where a model input channel reads its value from.
enum class ChannelSource { target_history, catalog, gap_flag, time, static_field };

struct Channel {
  std::string name;
  Kind kind = Kind::real;
  int vocab_size = 0;  // categorical only
  ChannelSource source = ChannelSource::catalog;
  int index = 0;  // catalog column, TimeFeature or StaticField
};

/// Channel order of the encoder, decoder and static inputs.
struct InputLayout {
  std::vector<Channel> encoder;
  std::vector<Channel> decoder;
  std::vector<Channel> statics;

  static std::vector<std::string> names(const std::vector<Channel>& chans) {
    std::vector<std::string> out;
    for (const auto& c : chans) out.push_back(c.name);
    return out;
  }
};

inline std::string history_channel_name(TargetHistoryMode mode) {
  return mode == TargetHistoryMode::estimated ? std::string(kTargetName) + "_estimated" : std::string(kTargetName);
}

/// Encoder: [target history], observed features, gap flag, known features,
/// time features. Decoder: known features, time features. Statics: site
/// covariates followed by static-role catalog features.
inline InputLayout make_layout(const FeatureCatalog& catalog, const NormStats& stats, TargetHistoryMode mode) {
  InputLayout l;
  auto feature_channel = [&](std::size_t j) {
    Channel c;
    c.name = catalog[j].name;
    c.kind = catalog[j].kind;
    c.source = ChannelSource::catalog;
    c.index = static_cast<int>(j);
    if (c.kind == Kind::categorical) c.vocab_size = stats.vocab_size(c.name);
    return c;
  };
  if (mode != TargetHistoryMode::none) {
    l.encoder.push_back({history_channel_name(mode), Kind::real, 0, ChannelSource::target_history, 0});
  }
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    if (catalog[j].role == Role::observed) l.encoder.push_back(feature_channel(j));
  }
  l.encoder.push_back({std::string(kGapFlagName), Kind::real, 0, ChannelSource::gap_flag, 0});
  std::vector<Channel> known;
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    if (catalog[j].role == Role::known) known.push_back(feature_channel(j));
  }
  for (TimeFeature tf : kTimeFeatures) {
    known.push_back({std::string(time_feature_name(tf)), Kind::real, 0, ChannelSource::time, static_cast<int>(tf)});
  }
  l.encoder.insert(l.encoder.end(), known.begin(), known.end());
  l.decoder = known;
  for (StaticField f : kStaticFields) {
    Channel c{std::string(static_field_name(f)), Kind::real, 0, ChannelSource::static_field, static_cast<int>(f)};
    if (static_field_is_categorical(f)) {
      c.kind = Kind::categorical;
      c.vocab_size = stats.vocab_size(c.name);
    }
    l.statics.push_back(c);
  }
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    if (catalog[j].role == Role::static_) l.statics.push_back(feature_channel(j));
  }
  return l;
}

/// One assembled encoder/decoder window; all values normalized (categoricals
/// as vocabulary indices).
struct Window {
  std::size_t site = 0;
  std::string site_id;
  Timestamp origin = 0;
  int encoder_length = 0;
  int decoder_length = 0;
  std::vector<double> encoder;  // encoder_length x m_enc, row-major
  std::vector<double> decoder;  // decoder_length x m_dec
  std::vector<double> statics;
  std::vector<double> label;      // normalized target at decoder steps
  std::vector<double> label_raw;  // physical units
  std::vector<std::uint8_t> label_gap;
};

struct WindowRef {
  std::size_t site = 0;
  std::size_t start = 0;  // index of the first encoder step
};

/// Number of windows a site of length `len` yields.
inline std::size_t window_count(std::size_t len, int k, int tau, int stride) {
  const std::size_t need = static_cast<std::size_t>(k + tau);
  if (len < need) return 0;
  return (len - need) / static_cast<std::size_t>(stride) + 1;
}

/// Lazily materialized windows over gap-free site series.
class WindowSet {
 public:
  WindowSet(std::shared_ptr<const std::vector<SiteSeries>> series, const FeatureCatalog& catalog, NormStats stats,
            WindowSpec spec, TargetHistoryMode mode, int stride)
      : series_(std::move(series)),
        catalog_(catalog),
        stats_(std::move(stats)),
        spec_(spec),
        mode_(mode),
        layout_(make_layout(catalog_, stats_, mode)) {
    spec_.validate();
    if (stride < 1) throw UsageError("build_windows: stride must be >= 1");
    for (std::size_t si = 0; si < series_->size(); ++si) {
      const SiteSeries& s = (*series_)[si];
      check_site(s);
      const std::size_t n = window_count(s.size(), spec_.encoder_length, spec_.decoder_length, stride);
      for (std::size_t w = 0; w < n; ++w) refs_.push_back({si, w * static_cast<std::size_t>(stride)});
    }
  }

  std::size_t size() const { return refs_.size(); }
  const WindowRef& ref(std::size_t i) const { return refs_[i]; }
  const std::vector<WindowRef>& refs() const { return refs_; }
  const InputLayout& layout() const { return layout_; }
  const WindowSpec& spec() const { return spec_; }
  TargetHistoryMode mode() const { return mode_; }
  const NormStats& stats() const { return stats_; }
  const std::vector<SiteSeries>& series() const { return *series_; }
  const FeatureCatalog& catalog() const { return catalog_; }

  Window get(std::size_t i) const {
    Window w;
    fill(refs_.at(i), w);
    return w;
  }

  /// Window whose decoder starts at `origin` for the given site, if it fits.
  std::optional<Window> at_origin(const std::string& site_id, Timestamp origin) const {
    for (std::size_t si = 0; si < series_->size(); ++si) {
      const SiteSeries& s = (*series_)[si];
      if (s.site_id != site_id || s.size() == 0) continue;
      const auto pos = origin - s.timestamps.front();
      if (pos < spec_.encoder_length || pos + spec_.decoder_length > static_cast<std::int64_t>(s.size())) {
        return std::nullopt;
      }
      Window w;
      fill({si, static_cast<std::size_t>(pos - spec_.encoder_length)}, w);
      return w;
    }
    return std::nullopt;
  }

  /// Materializes into `w`, reusing its buffers.
  void fill(const WindowRef& r, Window& w) const {
    const SiteSeries& s = (*series_)[r.site];
    const int k = spec_.encoder_length, tau = spec_.decoder_length;
    w.site = r.site;
    w.site_id = s.site_id;
    w.origin = s.timestamps[r.start + static_cast<std::size_t>(k)];
    w.encoder_length = k;
    w.decoder_length = tau;
    const std::size_t me = layout_.encoder.size(), md = layout_.decoder.size();
    w.encoder.resize(static_cast<std::size_t>(k) * me);
    w.decoder.resize(static_cast<std::size_t>(tau) * md);
    for (int p = 0; p < k; ++p) {
      for (std::size_t c = 0; c < me; ++c) w.encoder[p * me + c] = value(layout_.encoder[c], s, r.start + p, p);
    }
    for (int p = 0; p < tau; ++p) {
      for (std::size_t c = 0; c < md; ++c) w.decoder[p * md + c] = value(layout_.decoder[c], s, r.start + k + p, k + p);
    }
    w.statics.resize(layout_.statics.size());
    for (std::size_t c = 0; c < layout_.statics.size(); ++c) w.statics[c] = static_value(layout_.statics[c], s);
    w.label.resize(tau);
    w.label_raw.resize(tau);
    w.label_gap.resize(tau);
    for (int p = 0; p < tau; ++p) {
      const std::size_t idx = r.start + k + p;
      w.label_raw[p] = s.target[idx];
      w.label[p] = stats_.target_forward(s.target[idx]);
      w.label_gap[p] = s.gap_flag[idx];
    }
  }

 private:
  void check_site(const SiteSeries& s) const {
    s.validate(catalog_.size());
    if (!s.contiguous()) throw DataError("build_windows: site " + s.site_id + " has sequence gaps; gap-fill first");
    auto finite = [&](const std::vector<double>& col, const std::string& what) {
      for (double v : col) {
        if (!std::isfinite(v)) throw DataError("build_windows: site " + s.site_id + " has missing " + what);
      }
    };
    finite(s.target, "target values");
    for (std::size_t j = 0; j < catalog_.size(); ++j) {
      if (catalog_[j].role != Role::static_) finite(s.features[j], "values for '" + catalog_[j].name + "'");
    }
    if (mode_ == TargetHistoryMode::estimated) {
      if (s.estimated_target.empty()) {
        throw DataError("build_windows: estimated mode but site " + s.site_id + " has no estimated target column");
      }
      finite(s.estimated_target, "estimated target values");
    }
  }

  double encode_catalog(std::size_t j, double raw) const {
    if (catalog_[j].kind == Kind::categorical) {
      return stats_.category_index(catalog_[j].name, detail::category_key(raw));
    }
    return stats_.forward(catalog_[j].name, raw);
  }

  double value(const Channel& c, const SiteSeries& s, std::size_t idx, int pos) const {
    switch (c.source) {
      case ChannelSource::target_history:
        return stats_.target_forward(mode_ == TargetHistoryMode::estimated ? s.estimated_target[idx] : s.target[idx]);
      case ChannelSource::catalog: return encode_catalog(static_cast<std::size_t>(c.index), s.features[c.index][idx]);
      case ChannelSource::gap_flag: return s.gap_flag[idx];
      case ChannelSource::time: {
        const auto tf = static_cast<TimeFeature>(c.index);
        if (tf == TimeFeature::relative_time_index) {
          return static_cast<double>(pos - spec_.encoder_length) / spec_.encoder_length;
        }
        return stats_.forward(c.name, calendar_value(tf, s.timestamps[idx]));
      }
      case ChannelSource::static_field: break;
    }
    throw UsageError("window: static channel in time-varying block");
  }

  double static_value(const Channel& c, const SiteSeries& s) const {
    if (c.source == ChannelSource::static_field) {
      const auto f = static_cast<StaticField>(c.index);
      if (static_field_is_categorical(f)) return stats_.category_index(c.name, static_category(s.statics, f));
      return stats_.forward(c.name, static_real(s.statics, f));
    }
    // static-role catalog feature: first available value
    const auto& col = s.features[c.index];
    for (double v : col) {
      if (!std::isnan(v)) return encode_catalog(static_cast<std::size_t>(c.index), v);
    }
    return 0.0;
  }

  std::shared_ptr<const std::vector<SiteSeries>> series_;
  FeatureCatalog catalog_;
  NormStats stats_;
  WindowSpec spec_;
  TargetHistoryMode mode_;
  InputLayout layout_;
  std::vector<WindowRef> refs_;
};

inline WindowSet build_windows(std::vector<SiteSeries> series, const WindowSpec& spec, const FeatureCatalog& catalog,
                               TargetHistoryMode mode, int stride, NormStats stats) {
  return WindowSet(std::make_shared<const std::vector<SiteSeries>>(std::move(series)), catalog, std::move(stats), spec,
                   mode, stride);
}

}  // namespace fluxtft
