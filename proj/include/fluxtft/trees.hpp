#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/rng.hpp"
#include "fluxtft/dataset.hpp"

namespace fluxtft {

/// Dense row-major matrix of reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

struct TreeConfig {
  int n_trees = 200;
  int max_depth = -1;  // -1: unlimited
  int min_samples_leaf = 1;
  double max_features = 1.0;  // fraction in (0,1], or an absolute count when > 1
  bool boosting = false;
  double learning_rate = 0.1;
  double subsample = 1.0;
  bool bootstrap = true;  // forest only: rows drawn with replacement, else all rows
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw UsageError("tree config: n_trees must be >= 1");
    if (min_samples_leaf < 1) throw UsageError("tree config: min_samples_leaf must be >= 1");
    if (max_depth < -1 || max_depth == 0) throw UsageError("tree config: max_depth must be positive or -1");
    if (!(max_features > 0.0)) throw UsageError("tree config: max_features must be positive");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw UsageError("tree config: subsample must lie in (0, 1]");
    if (boosting && !(learning_rate > 0.0 && learning_rate <= 1.0)) {
      throw UsageError("tree config: learning_rate must lie in (0, 1]");
    }
  }

  std::size_t features_per_split(std::size_t p) const {
    std::size_t k = max_features <= 1.0 ? static_cast<std::size_t>(std::lround(max_features * static_cast<double>(p)))
                                        : static_cast<std::size_t>(max_features);
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(p, 1));
  }

  nlohmann::json to_json() const {
    return {{"n_trees", n_trees},       {"max_depth", max_depth}, {"min_samples_leaf", min_samples_leaf},
            {"max_features", max_features}, {"boosting", boosting},   {"learning_rate", learning_rate},
            {"subsample", subsample},   {"bootstrap", bootstrap},     {"seed", seed}};
  }

  static TreeConfig from_json(const nlohmann::json& j, TreeConfig base) {
    base.n_trees = j.value("n_trees", base.n_trees);
    base.max_depth = j.value("max_depth", base.max_depth);
    base.min_samples_leaf = j.value("min_samples_leaf", base.min_samples_leaf);
    base.max_features = j.value("max_features", base.max_features);
    base.boosting = j.value("boosting", base.boosting);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.subsample = j.value("subsample", base.subsample);
    base.bootstrap = j.value("bootstrap", base.bootstrap);
    base.seed = j.value("seed", base.seed);
    base.validate();
    return base;
  }

  static TreeConfig from_json(const nlohmann::json& j);

  /// Random-forest defaults.
  static TreeConfig forest() { return {}; }

  /// Boosting defaults.
  static TreeConfig boosted() {
    TreeConfig c;
    c.boosting = true;
    c.n_trees = 200;
    c.max_depth = 6;
    c.learning_rate = 0.1;
    return c;
  }
};

inline TreeConfig TreeConfig::from_json(const nlohmann::json& j) { return from_json(j, TreeConfig{}); }

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double gain = 0.0;  // SSE reduction of the split
  int n = 0;

  bool leaf() const { return feature < 0; }
};

/// CART regression tree; rows with x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const double* row) const {
    int i = 0;
    while (!nodes[i].leaf()) i = row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
};

namespace detail {

/// Greedy CART builder with midpoint thresholds and variance-reduction splits.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<double>& y, const TreeConfig& cfg, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng), features_(x.cols) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const std::size_t n = rows.size();
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r : rows) {
      sum += y_[r];
      lo = std::min(lo, y_[r]);
      hi = std::max(hi, y_[r]);
    }
    tree_.nodes[id].value = sum / static_cast<double>(n);
    tree_.nodes[id].n = static_cast<int>(n);
    const std::size_t min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    if (n < 2 * min_leaf || (cfg_.max_depth >= 0 && depth >= cfg_.max_depth) || lo == hi) return id;

    const std::size_t n_try = cfg_.features_per_split(x_.cols);
    if (n_try < x_.cols) {
      for (std::size_t i = 0; i < n_try; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng_.below(x_.cols - i));
        std::swap(features_[i], features_[j]);
      }
      std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(n_try));
    } else {
      std::iota(features_.begin(), features_.end(), 0);
    }

    const double parent = sum * sum / static_cast<double>(n);
    double best_score = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t t = 0; t < n_try; ++t) {
      const std::size_t f = features_[t];
      pairs_.resize(n);
      for (std::size_t i = 0; i < n; ++i) pairs_[i] = {x_(rows[i], f), y_[rows[i]]};
      std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += pairs_[i].second;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        if (!(pairs_[i].first < pairs_[i + 1].first)) continue;
        const double right = sum - left;
        const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (pairs_[i].first + pairs_[i + 1].first);
          if (!(mid < pairs_[i + 1].first)) mid = pairs_[i].first;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left_rows, right_rows;
    left_rows.reserve(n);
    right_rows.reserve(n);
    for (std::size_t r : rows) (x_(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    tree_.nodes[id].gain = best_score - parent;
    const int l = grow(left_rows, depth + 1);
    const int r = grow(right_rows, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  const Matrix& x_;
  const std::vector<double>& y_;
  const TreeConfig& cfg_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, double>> pairs_;
  RegressionTree tree_;
};

}  // namespace detail

/// Bagged forest or least-squares boosted ensemble over named features.
class ForestModel {
 public:
  std::vector<std::string> feature_names;
  bool boosting = false;
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::vector<RegressionTree> trees;
  TreeConfig config;

  std::size_t n_features() const { return feature_names.size(); }

  double predict_row(const double* row) const {
    if (boosting) {
      double f = base_score;
      for (const auto& t : trees) f += learning_rate * t.predict(row);
      return f;
    }
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    return s / static_cast<double>(trees.size());
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : trees) {
      nlohmann::json jt;
      std::vector<int> feature, left, right, n;
      std::vector<double> threshold, value, gain;
      for (const auto& nd : t.nodes) {
        feature.push_back(nd.feature);
        threshold.push_back(nd.threshold);
        left.push_back(nd.left);
        right.push_back(nd.right);
        value.push_back(nd.value);
        gain.push_back(nd.gain);
        n.push_back(nd.n);
      }
      jt["feature"] = feature;
      jt["threshold"] = threshold;
      jt["left"] = left;
      jt["right"] = right;
      jt["value"] = value;
      jt["gain"] = gain;
      jt["n"] = n;
      arr.push_back(std::move(jt));
    }
    return {{"format", "fluxtft-forest"}, {"version", 1},         {"features", feature_names},
            {"boosting", boosting},      {"base_score", base_score}, {"learning_rate", learning_rate},
            {"config", config.to_json()}, {"trees", arr}};
  }

  static ForestModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "fluxtft-forest" || j.value("version", 0) != 1) {
      throw DataError("forest: unsupported model document");
    }
    ForestModel m;
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.boosting = j.at("boosting").get<bool>();
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.config = TreeConfig::from_json(j.at("config"));
    for (const auto& jt : j.at("trees")) {
      RegressionTree t;
      const auto feature = jt.at("feature").get<std::vector<int>>();
      const auto threshold = jt.at("threshold").get<std::vector<double>>();
      const auto left = jt.at("left").get<std::vector<int>>();
      const auto right = jt.at("right").get<std::vector<int>>();
      const auto value = jt.at("value").get<std::vector<double>>();
      const auto gain = jt.at("gain").get<std::vector<double>>();
      const auto n = jt.at("n").get<std::vector<int>>();
      for (std::size_t i = 0; i < feature.size(); ++i) {
        t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], gain[i], n[i]});
      }
      m.trees.push_back(std::move(t));
    }
    return m;
  }
};

/// Fits a bagged CART forest (boosting off) or stagewise least-squares
/// boosting with shrinkage and row subsampling (boosting on).
inline ForestModel fit_forest(const Matrix& x, const std::vector<double>& y, const TreeConfig& cfg,
                              std::vector<std::string> feature_names = {}) {
  cfg.validate();
  if (x.rows == 0 || x.cols == 0) throw DataError("fit_forest: empty input");
  if (y.size() != x.rows) throw DataError("fit_forest: label count does not match rows");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw DataError("fit_forest: non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("fit_forest: non-finite label");
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < x.cols; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  if (feature_names.size() != x.cols) throw UsageError("fit_forest: feature name count does not match columns");

  ForestModel model;
  model.feature_names = std::move(feature_names);
  model.boosting = cfg.boosting;
  model.config = cfg;
  Rng rng(cfg.seed);
  const std::size_t n = x.rows;
  const std::size_t sample = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.subsample * static_cast<double>(n))));

  if (!cfg.boosting) {
    model.learning_rate = 1.0;
    detail::TreeBuilder builder(x, y, cfg, rng);
    for (int t = 0; t < cfg.n_trees; ++t) {
      std::vector<std::size_t> rows(cfg.bootstrap ? sample : n);
      if (cfg.bootstrap) {
        for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
      } else {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
      }
      model.trees.push_back(builder.build(std::move(rows)));
    }
    return model;
  }

  model.learning_rate = cfg.learning_rate;
  model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> pred(n, model.base_score), resid(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  detail::TreeBuilder builder(x, resid, cfg, rng);
  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - pred[i];
    std::vector<std::size_t> rows;
    if (sample < n) {
      std::vector<std::size_t> perm = all;
      for (std::size_t i = 0; i < sample; ++i) std::swap(perm[i], perm[i + static_cast<std::size_t>(rng.below(n - i))]);
      rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sample));
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all;
    }
    RegressionTree tree = builder.build(std::move(rows));
    for (std::size_t i = 0; i < n; ++i) pred[i] += cfg.learning_rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline std::vector<double> predict_forest(const ForestModel& model, const Matrix& x) {
  if (x.rows == 0) return {};
  if (x.cols != model.n_features()) {
    throw DataError("predict_forest: expected " + std::to_string(model.n_features()) + " columns, got " + std::to_string(x.cols));
  }
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = model.predict_row(x.row(i));
  return out;
}

/// Total SSE reduction per feature, normalized to sum to 1, descending
/// (ties by name). All zeros when no split was made.
inline std::vector<std::pair<std::string, double>> feature_importance(const ForestModel& model) {
  std::vector<double> total(model.n_features(), 0.0);
  for (const auto& t : model.trees) {
    for (const auto& nd : t.nodes) {
      if (!nd.leaf()) total[nd.feature] += nd.gain;
    }
  }
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < total.size(); ++j) out.emplace_back(model.feature_names[j], sum > 0 ? total[j] / sum : 0.0);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  return out;
}

/// Names of the k most important features; ties broken lexicographically.
inline std::vector<std::string> select_top_k(std::vector<std::pair<std::string, double>> importances, int k) {
  if (k <= 0) throw UsageError("select_top_k: k must be positive");
  if (static_cast<std::size_t>(k) > importances.size()) throw UsageError("select_top_k: k exceeds feature count");
  std::stable_sort(importances.begin(), importances.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back(importances[i].first);
  return out;
}

/// Every column available to the tree models: catalog features, calendar
/// features and site coordinates.
inline std::vector<std::string> tabular_feature_universe(const FeatureCatalog& catalog) {
  std::vector<std::string> out;
  for (const auto& e : catalog.entries()) out.push_back(e.name);
  for (TimeFeature tf : {TimeFeature::hour_of_day, TimeFeature::day_of_year, TimeFeature::month}) {
    out.emplace_back(time_feature_name(tf));
  }
  out.emplace_back("latitude");
  out.emplace_back("longitude");
  return out;
}

/// One row per timestamp with current-hour values of `names`.
inline Matrix tabular_rows(const SiteSeries& s, const FeatureCatalog& catalog, const std::vector<std::string>& names) {
  Matrix x(s.size(), names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string& name = names[c];
    if (const auto j = catalog.index_of(name)) {
      if (s.features.size() <= *j) throw DataError("tabular_rows: site " + s.site_id + " lacks column '" + name + "'");
      for (std::size_t i = 0; i < s.size(); ++i) x(i, c) = s.features[*j][i];
    } else if (const auto tf = time_feature_from_name(name); tf && *tf != TimeFeature::relative_time_index) {
      for (std::size_t i = 0; i < s.size(); ++i) x(i, c) = calendar_value(*tf, s.timestamps[i]);
    } else if (name == "latitude" || name == "longitude") {
      const double v = name == "latitude" ? s.statics.latitude : s.statics.longitude;
      for (std::size_t i = 0; i < s.size(); ++i) x(i, c) = v;
    } else {
      throw DataError("tabular_rows: missing feature column '" + name + "'");
    }
  }
  return x;
}

/// Stacks tabular rows of several sites. Rows whose label was gap-filled are
/// dropped when `skip_gap_labels` is set; `stride` thins rows per site.
inline std::pair<Matrix, std::vector<double>> tabular_dataset(const std::vector<SiteSeries>& sites,
                                                              const FeatureCatalog& catalog,
                                                              const std::vector<std::string>& names,
                                                              bool skip_gap_labels = true, int stride = 1) {
  if (stride < 1) throw UsageError("tabular_dataset: stride must be >= 1");
  Matrix x;
  x.cols = names.size();
  std::vector<double> y;
  for (const auto& s : sites) {
    const Matrix part = tabular_rows(s, catalog, names);
    for (std::size_t i = 0; i < s.size(); i += static_cast<std::size_t>(stride)) {
      if (skip_gap_labels && s.gap_flag[i]) continue;
      if (!std::isfinite(s.target[i])) continue;
      x.data.insert(x.data.end(), part.row(i), part.row(i) + part.cols);
      y.push_back(s.target[i]);
      ++x.rows;
    }
  }
  return {std::move(x), std::move(y)};
}

/// Per-timestamp target estimate for a site, used as the estimated history channel.
inline std::vector<double> predict_history(const ForestModel& model, const SiteSeries& series, const FeatureCatalog& catalog) {
  return predict_forest(model, tabular_rows(series, catalog, model.feature_names));
}

}  // namespace fluxtft
