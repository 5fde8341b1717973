#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/core/time.hpp"
#include "fluxtft/dataset.hpp"
#include "fluxtft/gapfill.hpp"
#include "fluxtft/interpret.hpp"
#include "fluxtft/metrics.hpp"
#include "fluxtft/split.hpp"
#include "fluxtft/synth.hpp"
#include "fluxtft/tft/capture.hpp"
#include "fluxtft/tft/checkpoint.hpp"
#include "fluxtft/tft/config.hpp"
#include "fluxtft/tft/model.hpp"
#include "fluxtft/tft/train.hpp"
#include "fluxtft/trees.hpp"

namespace fluxtft::pipeline {

inline constexpr const char* kVersion = "0.3.0";

struct DataSection {
  std::string dir;  // dataset directory; empty means synthesize
  synth::SynthConfig synth;
  std::int64_t min_span_hours = 8760;
  double max_missing_frac = 0.20;
};

struct SplitSection {
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  int n_folds = 4;
  int validation_fold = 4;  // 1-based
  std::uint64_t seed = 0;
};

struct TreeSection {
  TreeConfig forest = TreeConfig::forest();
  TreeConfig boosted = TreeConfig::boosted();
  int top_k_forest = 9;
  int top_k_boosted = 3;
  int train_stride = 1;
};

struct InterpretSection {
  int snapshot_stride = 7;
  int top_features = 15;
  int figure_features = 4;             // stacked areas when `features` is empty
  std::vector<std::string> features;   // explicit stacked-area features
  std::string site;                    // figure site; empty means the first test site
  std::string origin;                  // figure origin; empty means mid-July noon or the middle window
  std::vector<std::string> groups;     // group figure order; empty means all groups
};

struct ExperimentConfig {
  DataSection data;
  ImputeConfig gapfill;
  SplitSection split;
  TreeSection trees;
  tft::TftConfig tft;
  InterpretSection interpret;

  /// Relative data paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw UsageError("config: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key != "data" && key != "gapfill" && key != "split" && key != "trees" && key != "tft" && key != "experiment") {
        throw UsageError("config: unknown section '" + key + "'");
      }
    }
    ExperimentConfig c;
    try {
      const auto sec = [&](const char* name) { return j.contains(name) ? j.at(name) : nlohmann::json::object(); };
      const auto d = sec("data");
      c.data.dir = d.value("dir", std::string());
      if (!c.data.dir.empty() && std::filesystem::path(c.data.dir).is_relative() && !base_dir.empty()) {
        c.data.dir = (base_dir / c.data.dir).lexically_normal().string();
      }
      if (d.contains("synth")) c.data.synth = synth::SynthConfig::from_json(d.at("synth"));
      c.data.min_span_hours = d.value("min_span_hours", c.data.min_span_hours);
      c.data.max_missing_frac = d.value("max_missing_frac", c.data.max_missing_frac);
      c.gapfill = ImputeConfig::from_json(sec("gapfill"));
      const auto s = sec("split");
      if (s.contains("ratios")) c.split.ratios = s.at("ratios").get<std::array<double, 3>>();
      c.split.n_folds = s.value("n_folds", c.split.n_folds);
      c.split.validation_fold = s.value("validation_fold", c.split.validation_fold);
      c.split.seed = s.value("seed", c.split.seed);
      const auto t = sec("trees");
      if (t.contains("forest")) c.trees.forest = TreeConfig::from_json(t.at("forest"), c.trees.forest);
      if (t.contains("boosted")) c.trees.boosted = TreeConfig::from_json(t.at("boosted"), c.trees.boosted);
      c.trees.forest.boosting = false;
      c.trees.boosted.boosting = true;
      c.trees.top_k_forest = t.value("top_k_forest", c.trees.top_k_forest);
      c.trees.top_k_boosted = t.value("top_k_boosted", c.trees.top_k_boosted);
      c.trees.train_stride = t.value("train_stride", c.trees.train_stride);
      c.tft = tft::TftConfig::from_json(sec("tft"));
      const auto i = sec("experiment");
      c.interpret.snapshot_stride = i.value("snapshot_stride", c.interpret.snapshot_stride);
      c.interpret.top_features = i.value("top_features", c.interpret.top_features);
      c.interpret.figure_features = i.value("figure_features", c.interpret.figure_features);
      c.interpret.features = i.value("features", c.interpret.features);
      c.interpret.site = i.value("site", c.interpret.site);
      c.interpret.origin = i.value("origin", c.interpret.origin);
      c.interpret.groups = i.value("groups", c.interpret.groups);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text::read_file(path.string()));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
  }

  void validate() const {
    if (data.min_span_hours < 0) throw UsageError("config: data.min_span_hours must be >= 0");
    if (split.n_folds < 2) throw UsageError("config: split.n_folds must be >= 2");
    if (split.validation_fold < 1 || split.validation_fold > split.n_folds) {
      throw UsageError("config: split.validation_fold must lie in [1, n_folds]");
    }
    if (trees.top_k_forest < 1 || trees.top_k_boosted < 1) throw UsageError("config: tree top_k must be >= 1");
    if (trees.train_stride < 1) throw UsageError("config: trees.train_stride must be >= 1");
    if (interpret.snapshot_stride < 1) throw UsageError("config: experiment.snapshot_stride must be >= 1");
    if (interpret.top_features < 1) throw UsageError("config: experiment.top_features must be >= 1");
    if (interpret.figure_features < 1) throw UsageError("config: experiment.figure_features must be >= 1");
    if (!interpret.origin.empty() && !parse_timestamp(interpret.origin)) {
      throw UsageError("config: experiment.origin is not a timestamp: " + interpret.origin);
    }
    tft.validate();
  }

  nlohmann::json to_json() const {
    return {{"data",
             {{"dir", data.dir}, {"synth", data.synth.to_json()}, {"min_span_hours", data.min_span_hours},
              {"max_missing_frac", data.max_missing_frac}}},
            {"gapfill", gapfill.to_json()},
            {"split",
             {{"ratios", split.ratios}, {"n_folds", split.n_folds}, {"validation_fold", split.validation_fold},
              {"seed", split.seed}}},
            {"trees",
             {{"forest", trees.forest.to_json()}, {"boosted", trees.boosted.to_json()},
              {"top_k_forest", trees.top_k_forest}, {"top_k_boosted", trees.top_k_boosted},
              {"train_stride", trees.train_stride}}},
            {"tft", tft.to_json()},
            {"experiment",
             {{"snapshot_stride", interpret.snapshot_stride}, {"top_features", interpret.top_features},
              {"figure_features", interpret.figure_features}, {"features", interpret.features},
              {"site", interpret.site}, {"origin", interpret.origin}, {"groups", interpret.groups}}}};
  }

  /// FNV-1a of the canonical (key-sorted, compact) JSON form.
  std::string hash() const { return text::hex64(text::fnv1a(to_json().dump())); }
};

using Log = std::function<void(const std::string&)>;

/// Loads (or synthesizes), filters and gap-fills the site collection.
inline Dataset prepare_dataset(const ExperimentConfig& cfg, const Log& log = {}) {
  Dataset d;
  if (cfg.data.dir.empty()) {
    d = synth::generate_sites(cfg.data.synth).dataset;
  } else {
    d = load_dataset(cfg.data.dir);
  }
  const std::size_t before = d.sites.size();
  d.sites = filter_sites(d.sites, cfg.data.min_span_hours, cfg.data.max_missing_frac);
  if (d.sites.empty()) throw DataError("no site passes the coverage filter");
  if (log) log("sites: " + std::to_string(d.sites.size()) + " of " + std::to_string(before) + " kept");
  d.sites = gapfill_sites(d.sites, d.catalog, cfg.gapfill);
  return d;
}

inline std::map<std::string, std::string> site_groups(const std::vector<SiteSeries>& sites) {
  std::map<std::string, std::string> out;
  for (const auto& s : sites) out[s.site_id] = s.statics.igbp_generic;
  return out;
}

/// Stratified test hold-out, then stratified CV folds over the remaining
/// sites. The returned assignment marks `validation_fold` as val and the
/// other folds as train; every non-test site carries its fold number.
inline SplitAssignment make_assignment(const std::vector<SiteSeries>& sites, const SplitSection& cfg) {
  std::vector<std::pair<std::string, std::string>> labels;
  for (const auto& s : sites) labels.emplace_back(s.site_id, s.statics.igbp_generic);
  const SplitAssignment base = stratified_split(labels, cfg.ratios, cfg.seed);
  if (base.count(Split::test) == 0) throw DataError("split: no test site");
  auto folds = cv_groups(base, cfg.n_folds, Rng::derive(cfg.seed, 1));
  return folds[static_cast<std::size_t>(cfg.validation_fold - 1)];
}

/// Sites whose assignment satisfies `pred`, in input order.
inline std::vector<SiteSeries> select_sites(const std::vector<SiteSeries>& sites, const SplitAssignment& split,
                                            const std::function<bool(const SiteAssignment&)>& pred) {
  std::vector<SiteSeries> out;
  for (const auto& s : sites) {
    const SiteAssignment* a = split.find(s.site_id);
    if (!a) throw DataError("split: site " + s.site_id + " is not assigned");
    if (pred(*a)) out.push_back(s);
  }
  return out;
}

inline std::vector<SiteSeries> select_sites(const std::vector<SiteSeries>& sites, const SplitAssignment& split, Split which) {
  return select_sites(sites, split, [which](const SiteAssignment& a) { return a.split == which; });
}

/// Observed/predicted pairs with their site and group.
struct Scored {
  std::vector<double> y, yhat;
  std::vector<std::string> site, group;
  std::vector<Timestamp> time;

  std::size_t size() const { return y.size(); }
  void push(double obs, double pred, const SiteSeries& s, std::size_t i) {
    y.push_back(obs);
    yhat.push_back(pred);
    site.push_back(s.site_id);
    group.push_back(s.statics.igbp_generic);
    time.push_back(s.timestamps[i]);
  }
  MetricReport metrics(const std::string& label) const {
    MetricReport r = compute_metrics(y, yhat);
    r.label = label;
    return r;
  }
};

/// Row indices of a site that every model is scored on: decoder rows of the
/// stride-tau windows (so index >= k), labels not gap-filled.
inline std::vector<std::size_t> eval_rows(const SiteSeries& s, const WindowSpec& spec) {
  std::vector<std::size_t> out;
  const std::size_t n = window_count(s.size(), spec.encoder_length, spec.decoder_length, spec.decoder_length);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t origin = w * static_cast<std::size_t>(spec.decoder_length) + static_cast<std::size_t>(spec.encoder_length);
    for (int p = 0; p < spec.decoder_length; ++p) {
      if (!s.gap_flag[origin + static_cast<std::size_t>(p)]) out.push_back(origin + static_cast<std::size_t>(p));
    }
  }
  return out;
}

inline Scored score_tree(const ForestModel& model, const std::vector<SiteSeries>& sites, const FeatureCatalog& catalog,
                         const WindowSpec& spec) {
  Scored out;
  for (const auto& s : sites) {
    const auto pred = predict_history(model, s, catalog);
    for (std::size_t i : eval_rows(s, spec)) out.push(s.target[i], pred[i], s, i);
  }
  return out;
}

/// All non-gap rows of the given sites.
inline Scored score_tree_all_rows(const ForestModel& model, const std::vector<SiteSeries>& sites, const FeatureCatalog& catalog) {
  Scored out;
  for (const auto& s : sites) {
    const auto pred = predict_history(model, s, catalog);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.gap_flag[i]) out.push(s.target[i], pred[i], s, i);
    }
  }
  return out;
}

/// Test windows at stride tau; their decoder rows are exactly `eval_rows`.
inline WindowSet eval_windows(const tft::TftModel& model, std::vector<SiteSeries> sites) {
  const auto& cfg = model.config();
  return build_windows(std::move(sites), cfg.window_spec(), model.catalog(), cfg.target_history_mode, cfg.decoder_length,
                       model.stats());
}

inline Scored score_tft(const tft::TftModel& model, const std::vector<SiteSeries>& sites) {
  const WindowSet set = eval_windows(model, sites);
  const tft::Prediction pred = tft::predict(model, set);
  std::map<std::string, const SiteSeries*> by_id;
  for (const auto& s : set.series()) by_id[s.site_id] = &s;
  Scored out;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    if (pred.gap_flag[r]) continue;
    const SiteSeries& s = *by_id.at(pred.site_id[r]);
    const auto it = std::lower_bound(s.timestamps.begin(), s.timestamps.end(), pred.time[r]);
    out.push(pred.observed[r], pred.point[r], s, static_cast<std::size_t>(it - s.timestamps.begin()));
  }
  return out;
}

inline ForestModel fit_tree(const std::vector<SiteSeries>& sites, const FeatureCatalog& catalog,
                            const std::vector<std::string>& names, const TreeConfig& cfg, int stride) {
  auto [x, y] = tabular_dataset(sites, catalog, names, true, stride);
  if (x.rows == 0) throw DataError("trees: no training rows");
  return fit_forest(x, y, cfg, names);
}

/// Sets `estimated_target` on every site: out-of-fold predictions for sites
/// with a fold (a model of `cfg` fit on the other non-test folds), `fallback`
/// predictions for the rest. Returns the per-fold models' scores on their
/// held-out fold.
inline std::vector<Scored> attach_estimated_history(std::vector<SiteSeries>& sites, const SplitAssignment& split,
                                                    const FeatureCatalog& catalog, const std::vector<std::string>& names,
                                                    const TreeConfig& cfg, int stride, const ForestModel& fallback,
                                                    int n_folds, const Log& log = {}) {
  std::vector<Scored> fold_scores;
  std::map<std::string, std::vector<double>> history;
  for (int f = 1; f <= n_folds; ++f) {
    const auto fit_on = select_sites(sites, split, [f](const SiteAssignment& a) { return a.split != Split::test && a.fold != f; });
    const auto held = select_sites(sites, split, [f](const SiteAssignment& a) { return a.split != Split::test && a.fold == f; });
    if (held.empty()) throw DataError("cv: fold " + std::to_string(f) + " is empty");
    if (log) log("cv fold " + std::to_string(f) + ": fit on " + std::to_string(fit_on.size()) + " sites");
    const ForestModel m = fit_tree(fit_on, catalog, names, cfg, stride);
    fold_scores.push_back(score_tree_all_rows(m, held, catalog));
    for (const auto& s : held) history[s.site_id] = predict_history(m, s, catalog);
  }
  for (auto& s : sites) {
    const auto it = history.find(s.site_id);
    s.estimated_target = it != history.end() ? it->second : predict_history(fallback, s, catalog);
  }
  return fold_scores;
}

/// Streaming interpretation summary of a model over a site collection.
struct InterpretResult {
  std::vector<std::string> features;            // encoder inputs
  std::vector<GroupCurve> curves;
  std::vector<FeatureImportance> importance;    // all features, descending
  std::optional<InterpretationSnapshot> figure; // snapshot chosen for the figure
  std::vector<std::string> figure_features;
  std::size_t snapshots = 0;

  nlohmann::json to_json() const {
    nlohmann::json curves_j = nlohmann::json::array();
    for (const auto& c : curves) curves_j.push_back({{"group", c.group}, {"snapshots", c.snapshots}, {"attention", c.attention}});
    nlohmann::json imp = nlohmann::json::array();
    for (const auto& f : importance) imp.push_back({{"feature", f.feature}, {"importance_pct", f.percent}});
    nlohmann::json j{{"features", features}, {"snapshots", snapshots}, {"groups", curves_j}, {"importance", imp},
                     {"figure_features", figure_features}, {"figure", nullptr}};
    if (figure) j["figure"] = {{"site_id", figure->site_id}, {"origin", format_timestamp(figure->origin)}};
    return j;
  }
};

/// Picks the figure window origin for a site: the configured origin when
/// given, otherwise 12:00 on 15 July of the first year when a window ends
/// there, otherwise the middle window.
inline Timestamp figure_origin(const SiteSeries& s, const WindowSpec& spec, const std::string& configured) {
  const std::size_t n = window_count(s.size(), spec.encoder_length, spec.decoder_length, 1);
  if (n == 0) throw DataError("interpret: site " + s.site_id + " is too short for one window");
  const Timestamp first = s.timestamps[static_cast<std::size_t>(spec.encoder_length)];
  const Timestamp last = s.timestamps[n - 1 + static_cast<std::size_t>(spec.encoder_length)];
  if (!configured.empty()) {
    const Timestamp t = *parse_timestamp(configured);
    if (t < first || t > last) throw UsageError("interpret: origin " + configured + " has no full window at " + s.site_id);
    return t;
  }
  const Timestamp july = make_timestamp(year_of(s.timestamps.front()), 7, 15, 12);
  if (july >= first && july <= last) return july;
  return s.timestamps[(n - 1) / 2 + static_cast<std::size_t>(spec.encoder_length)];
}

/// Captures snapshots every `snapshot_stride` hours over all sites and
/// reduces them to group attention curves and feature importance. The
/// figure snapshot is computed separately at its exact origin.
inline InterpretResult interpret_model(const tft::TftModel& model, const std::vector<SiteSeries>& sites,
                                       const InterpretSection& cfg, const std::string& figure_site) {
  const auto& tc = model.config();
  InterpretResult r;
  r.features = InputLayout::names(model.layout().encoder);
  const auto groups = site_groups(sites);
  std::map<std::string, GroupCurve> acc;
  std::vector<double> imp_sum(r.features.size(), 0.0);
  double imp_rows = 0.0;
  for (const auto& site : sites) {
    const WindowSet set = build_windows({site}, tc.window_spec(), model.catalog(), tc.target_history_mode,
                                        cfg.snapshot_stride, model.stats());
    std::vector<InterpretationSnapshot> snaps;
    tft::predict(model, set, false,
                 [&](const Window& w, const tft::TftOutput& out) { snaps.push_back(tft::capture_interpretation(out, w)); });
    if (snaps.empty()) continue;
    for (const auto& c : attention_by_group(snaps, groups)) {
      GroupCurve& a = acc[c.group];
      a.group = c.group;
      if (a.attention.empty()) a.attention.assign(c.attention.size(), 0.0);
      for (std::size_t i = 0; i < c.attention.size(); ++i) a.attention[i] += c.attention[i] * static_cast<double>(c.snapshots);
      a.snapshots += c.snapshots;
    }
    const double rows = static_cast<double>(snaps.size() * snaps.front().encoder_length());
    for (const auto& f : feature_importance_pct(snaps, r.features)) {
      const auto col = std::find(r.features.begin(), r.features.end(), f.feature) - r.features.begin();
      imp_sum[static_cast<std::size_t>(col)] += f.percent * rows;
    }
    imp_rows += rows;
    r.snapshots += snaps.size();
  }
  if (r.snapshots == 0) throw DataError("interpret: no site is long enough for one window");
  for (auto& [g, c] : acc) {
    for (double& v : c.attention) v /= static_cast<double>(c.snapshots);
  }
  if (cfg.groups.empty()) {
    for (auto& [g, c] : acc) r.curves.push_back(c);
  } else {
    for (const auto& g : cfg.groups) {
      const auto it = acc.find(g);
      if (it == acc.end()) throw UsageError("interpret: no snapshots for group '" + g + "'");
      r.curves.push_back(it->second);
    }
  }
  for (std::size_t f = 0; f < r.features.size(); ++f) r.importance.push_back({r.features[f], imp_sum[f] / imp_rows});
  std::stable_sort(r.importance.begin(), r.importance.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
    return a.percent != b.percent ? a.percent > b.percent : a.feature < b.feature;
  });

  if (!figure_site.empty()) {
    const auto it = std::find_if(sites.begin(), sites.end(), [&](const SiteSeries& s) { return s.site_id == figure_site; });
    if (it == sites.end()) throw UsageError("interpret: figure site " + figure_site + " not in the data");
    const Timestamp origin = figure_origin(*it, tc.window_spec(), cfg.origin);
    const WindowSet set = build_windows({*it}, tc.window_spec(), model.catalog(), tc.target_history_mode, 1, model.stats());
    const auto w = set.at_origin(it->site_id, origin);
    if (!w) throw DataError("interpret: no window at " + format_timestamp(origin) + " for " + it->site_id);
    tft::Workspace ws;
    model.forward(*w, ws);
    r.figure = tft::capture_interpretation(ws.output, *w);
    if (!cfg.features.empty()) {
      r.figure_features = cfg.features;
    } else {
      for (const auto& f : r.importance) {
        if (r.figure_features.size() >= static_cast<std::size_t>(cfg.figure_features)) break;
        r.figure_features.push_back(f.feature);
      }
    }
  }
  return r;
}

/// Writes top_features.csv, interpretation.json and the figures under `dir`.
inline void write_interpretation(const InterpretResult& r, const InterpretSection& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "figures");
  std::vector<FeatureImportance> top = r.importance;
  if (top.size() > static_cast<std::size_t>(cfg.top_features)) top.resize(static_cast<std::size_t>(cfg.top_features));
  text::write_file((dir / "top_features.csv").string(), top_features_csv(top));
  text::write_file((dir / "interpretation.json").string(), r.to_json().dump(2) + "\n");
  render_group_attention_svg(r.curves, (dir / "figures" / "group_attention.svg").string());
  if (r.figure) {
    render_snapshot_svg(*r.figure, r.features, r.figure_features, (dir / "figures" / "snapshot.svg").string());
    text::write_file((dir / "figures" / "snapshot.csv").string(), snapshots_to_csv({*r.figure}, r.features));
  }
}

struct ModelRow {
  std::string name;
  MetricReport test;
  std::optional<double> val_nse;
};

struct ExperimentResult {
  ExperimentConfig config;
  SplitAssignment split;
  std::vector<ModelRow> comparison;
  std::vector<ModelRow> candidates;  // tree candidates compared on validation NSE
  std::string selected_tree;
  std::vector<std::string> selected_features;
  std::vector<std::pair<std::string, double>> baseline_importance;
  std::vector<MetricReport> cv_folds;
  MetricReport cv_pooled;
  std::vector<LossSummary> cv_loss;
  GroupBreakdown igbp;  // No-GPP-TFT on the test sites
  std::map<std::string, tft::TrainHistory> histories;
  InterpretResult interpretation;
  std::vector<std::pair<std::string, double>> timing;  // seconds per step

  const ModelRow& row(const std::string& name) const {
    for (const auto& r : comparison) {
      if (r.name == name) return r;
    }
    throw UsageError("experiment: no row " + name);
  }
};

inline std::string slug(std::string name) {
  for (char& c : name) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

inline nlohmann::json report_json(const ExperimentResult& r) {
  auto rows = [](const std::vector<ModelRow>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& m : v) {
      nlohmann::json j{{"model", m.name}, {"test", m.test.to_json()}, {"val_nse", nullptr}};
      if (m.val_nse) j["val_nse"] = *m.val_nse;
      a.push_back(j);
    }
    return a;
  };
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.cv_folds) folds.push_back(f.to_json());
  nlohmann::json loss = nlohmann::json::array();
  for (const auto& l : r.cv_loss) loss.push_back(l.to_json());
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, h] : r.histories) hist[k] = h.to_json();
  nlohmann::json imp = nlohmann::json::array();
  for (const auto& [f, v] : r.baseline_importance) imp.push_back({{"feature", f}, {"importance", v}});
  return {{"version", kVersion},
          {"config_hash", r.config.hash()},
          {"comparison", rows(r.comparison)},
          {"tree_candidates", rows(r.candidates)},
          {"selected_tree", r.selected_tree},
          {"selected_features", r.selected_features},
          {"baseline_importance", imp},
          {"cv", {{"folds", folds}, {"pooled", r.cv_pooled.to_json()}, {"loss", loss}}},
          {"igbp_breakdown", r.igbp.to_json()},
          {"histories", hist},
          {"interpretation", r.interpretation.to_json()},
          {"sites", {{"train", r.split.ids(Split::train)}, {"val", r.split.ids(Split::val)}, {"test", r.split.ids(Split::test)}}}};
}

inline std::string metrics_csv(const std::vector<MetricReport>& rows, const std::string& first_column) {
  std::string out = first_column + ",n,rmse,mae,nse\n";
  for (const auto& m : rows) {
    out += m.label + ',' + std::to_string(m.n) + ',' + text::fixed(m.rmse, 6) + ',' + text::fixed(m.mae, 6) + ',' +
           (m.nse ? text::fixed(*m.nse, 6) : std::string("")) + '\n';
  }
  return out;
}

/// Writes every artifact of a finished experiment. Checkpoints are written
/// while the experiment runs.
inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& content) { text::write_file((dir / name).string(), content); };
  put("config.json", r.config.to_json().dump(2) + "\n");
  put("split.csv", r.split.to_csv());
  std::vector<MetricReport> table;
  for (const auto& m : r.comparison) {
    table.push_back(m.test);
    table.back().label = m.name;
  }
  put("comparison.csv", metrics_csv(table, "model"));
  put("comparison.txt", metrics_table(table));
  put("cv_folds.csv", metrics_csv(r.cv_folds, "fold"));
  put("igbp_breakdown.csv", metrics_csv(r.igbp.groups, "igbp"));
  put("report.json", report_json(r).dump(2) + "\n");
  write_interpretation(r.interpretation, r.config.interpret, dir);
  nlohmann::json timing = nlohmann::json::object();
  for (const auto& [k, v] : r.timing) timing[k] = v;
  nlohmann::json seeds{{"split", r.config.split.seed},
                       {"tft", r.config.tft.seed},
                       {"forest", r.config.trees.forest.seed},
                       {"boosted", r.config.trees.boosted.seed},
                       {"synth", r.config.data.synth.seed}};
  put("manifest.json", nlohmann::json{{"version", kVersion},
                                      {"config_hash", r.config.hash()},
                                      {"seeds", seeds},
                                      {"compiler", __VERSION__},
                                      {"cxx_standard", static_cast<long>(__cplusplus)},
                                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                                      {"timing_seconds", timing}}
                               .dump(2) +
                           "\n");
}

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline void save_forest(const ForestModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  text::write_file((dir / "forest.json").string(), m.to_json().dump() + "\n");
}

}  // namespace detail

/// Trains one TFT in the given history mode on train sites with early
/// stopping on the validation sites.
inline tft::TftModel train_tft(const tft::TftConfig& base, TargetHistoryMode mode, const FeatureCatalog& catalog,
                               const std::vector<SiteSeries>& train_sites, const std::vector<SiteSeries>& val_sites,
                               tft::TrainHistory& history, const Log& log = {}, const std::string& name = "tft") {
  tft::TftConfig cfg = base;
  cfg.target_history_mode = mode;
  NormStats stats = fit_norm_stats(train_sites, catalog);
  tft::TftModel model(cfg, catalog, stats);
  const WindowSet train_set = build_windows(train_sites, cfg.window_spec(), catalog, mode, cfg.train_stride, stats);
  const WindowSet val_set = build_windows(val_sites, cfg.window_spec(), catalog, mode, cfg.eval_stride, stats);
  tft::TrainOptions opt;
  if (log) {
    opt.on_epoch = [&](int e, double tl, double vl) {
      log(name + " epoch " + std::to_string(e + 1) + " train " + text::fixed(tl, 5) + " val " + text::fixed(vl, 5));
    };
  }
  history = tft::train(model, train_set, val_set.size() ? &val_set : nullptr, opt);
  return model;
}

/// Full comparison: tree baseline, tree feature selection, three TFT
/// history variants, CV of the selected tree, IGBP breakdown and
/// interpretation. Checkpoints go under `out_dir`/checkpoint when set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {},
                                       const Log& log = {}) {
  ExperimentResult r;
  r.config = cfg;
  detail::Stopwatch clock;
  const std::filesystem::path ckpt = out_dir.empty() ? std::filesystem::path() : out_dir / "checkpoint";

  Dataset data = prepare_dataset(cfg, log);
  const FeatureCatalog& cat = data.catalog;
  r.split = make_assignment(data.sites, cfg.split);
  const auto train = select_sites(data.sites, r.split, Split::train);
  const auto val = select_sites(data.sites, r.split, Split::val);
  const auto test = select_sites(data.sites, r.split, Split::test);
  if (train.empty() || val.empty()) throw DataError("split: empty training or validation set");
  if (log) {
    log("split: " + std::to_string(train.size()) + " train, " + std::to_string(val.size()) + " val, " +
        std::to_string(test.size()) + " test");
  }
  r.timing.emplace_back("prepare", clock.lap());
  const WindowSpec spec = cfg.tft.window_spec();

  // Tree baseline on the full tabular universe.
  const auto universe = tabular_feature_universe(cat);
  const ForestModel baseline = fit_tree(train, cat, universe, cfg.trees.forest, cfg.trees.train_stride);
  r.baseline_importance = feature_importance(baseline);
  r.comparison.push_back({"RFR-BASELINE", score_tree(baseline, test, cat, spec).metrics("RFR-BASELINE"),
                          score_tree_all_rows(baseline, val, cat).metrics("val").nse});
  if (!ckpt.empty()) detail::save_forest(baseline, ckpt / "rfr_baseline");
  if (log) log("RFR-BASELINE done");
  r.timing.emplace_back("rfr_baseline", clock.lap());

  // Reduced-feature candidates chosen on validation NSE.
  struct Candidate {
    std::string name;
    TreeConfig cfg;
    std::vector<std::string> names;
    ForestModel model;
  };
  std::vector<Candidate> cands;
  cands.push_back({"RFR-TOP" + std::to_string(cfg.trees.top_k_forest), cfg.trees.forest,
                   select_top_k(r.baseline_importance, cfg.trees.top_k_forest), {}});
  cands.push_back({"XGB-TOP" + std::to_string(cfg.trees.top_k_boosted), cfg.trees.boosted,
                   select_top_k(r.baseline_importance, cfg.trees.top_k_boosted), {}});
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto& c = cands[i];
    c.model = fit_tree(train, cat, c.names, c.cfg, cfg.trees.train_stride);
    const auto v = score_tree_all_rows(c.model, val, cat).metrics("val").nse;
    r.candidates.push_back({c.name, score_tree(c.model, test, cat, spec).metrics(c.name), v});
    if (log) log(c.name + " validation NSE " + (v ? text::fixed(*v, 4) : std::string("undef")));
    const auto& bv = r.candidates[best].val_nse;
    if (i > 0 && v && (!bv || *v > *bv)) best = i;
  }
  const Candidate& sel = cands[best];
  r.selected_tree = sel.name;
  r.selected_features = sel.names;
  r.comparison.push_back(r.candidates[best]);
  if (!ckpt.empty()) {
    for (const auto& c : cands) detail::save_forest(c.model, ckpt / slug(c.name));
  }
  r.timing.emplace_back("tree_selection", clock.lap());

  // CV of the selected tree; its out-of-fold predictions become the
  // estimated history.
  std::vector<SiteSeries> with_history = data.sites;
  const auto fold_scores = attach_estimated_history(with_history, r.split, cat, sel.names, sel.cfg, cfg.trees.train_stride,
                                                    sel.model, cfg.split.n_folds, log);
  Scored pooled;
  std::vector<std::string> fold_label;
  for (std::size_t f = 0; f < fold_scores.size(); ++f) {
    const std::string label = "fold" + std::to_string(f + 1);
    r.cv_folds.push_back(fold_scores[f].metrics(label));
    const auto& s = fold_scores[f];
    pooled.y.insert(pooled.y.end(), s.y.begin(), s.y.end());
    pooled.yhat.insert(pooled.yhat.end(), s.yhat.begin(), s.yhat.end());
    fold_label.insert(fold_label.end(), s.size(), label);
  }
  r.cv_pooled = pooled.metrics("pooled");
  r.cv_loss = loss_distribution(pooled.y, pooled.yhat, fold_label);
  r.timing.emplace_back("cv", clock.lap());

  // TFT variants.
  struct Variant {
    const char* name;
    TargetHistoryMode mode;
  };
  const std::array<Variant, 3> variants{{{"GPP-TFT", TargetHistoryMode::observed},
                                         {"No-GPP-TFT", TargetHistoryMode::none},
                                         {"Tree-FT", TargetHistoryMode::estimated}}};
  std::optional<tft::TftModel> no_gpp;
  for (const auto& v : variants) {
    const auto& pool = v.mode == TargetHistoryMode::estimated ? with_history : data.sites;
    const auto tr = select_sites(pool, r.split, Split::train);
    const auto va = select_sites(pool, r.split, Split::val);
    const auto te = select_sites(pool, r.split, Split::test);
    tft::TrainHistory hist;
    tft::TftModel model = train_tft(cfg.tft, v.mode, cat, tr, va, hist, log, v.name);
    r.histories[v.name] = hist;
    const Scored scored = score_tft(model, te);
    r.comparison.push_back({v.name, scored.metrics(v.name), score_tft(model, va).metrics("val").nse});
    if (!ckpt.empty()) tft::save_checkpoint(model, ckpt / slug(v.name));
    if (v.mode == TargetHistoryMode::none) {
      r.igbp = breakdown_by_group(scored.y, scored.yhat, scored.group);
      no_gpp.emplace(std::move(model));
    }
    r.timing.emplace_back(slug(v.name), clock.lap());
  }

  const std::string figure_site = cfg.interpret.site.empty() ? test.front().site_id : cfg.interpret.site;
  r.interpretation = interpret_model(*no_gpp, data.sites, cfg.interpret, figure_site);
  r.timing.emplace_back("interpret", clock.lap());
  return r;
}

}  // namespace fluxtft::pipeline
