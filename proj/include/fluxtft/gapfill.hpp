#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/dataset.hpp"

namespace fluxtft {

/// KNN imputation settings. Only Euclidean distance and uniform weighting exist.
struct ImputeConfig {
  int k_neighbors = 5;

  static ImputeConfig from_json(const nlohmann::json& j) {
    ImputeConfig c;
    c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
    if (j.value("metric", std::string("euclidean")) != "euclidean") throw UsageError("gapfill: metric must be euclidean");
    if (j.value("weighting", std::string("uniform")) != "uniform") throw UsageError("gapfill: weighting must be uniform");
    if (c.k_neighbors < 1) throw UsageError("gapfill: k_neighbors must be positive");
    return c;
  }
  nlohmann::json to_json() const { return {{"k_neighbors", k_neighbors}, {"metric", "euclidean"}, {"weighting", "uniform"}}; }
};

namespace detail {

struct Neighbor {
  double dist = 0.0;
  std::size_t index = 0;
  bool operator<(const Neighbor& o) const { return dist < o.dist || (dist == o.dist && index < o.index); }
};

/// Keeps the k best candidates sorted by (distance, index).
inline void keep_k_nearest(std::vector<Neighbor>& cands, std::size_t k) {
  if (cands.size() > k) {
    std::nth_element(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end());
    cands.resize(k);
  }
  std::sort(cands.begin(), cands.end());
}

/// Squared distance over coordinates observed in both rows, scaled by
/// total/shared. Returns NaN when no coordinate is shared.
inline double partial_sq_distance(const std::vector<std::vector<double>>& cols, std::size_t a, std::size_t b) {
  double sum = 0.0;
  std::size_t shared = 0;
  for (const auto& col : cols) {
    const double x = col[a], y = col[b];
    if (std::isnan(x) || std::isnan(y)) continue;
    const double d = x - y;
    sum += d * d;
    ++shared;
  }
  if (shared == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum * static_cast<double>(cols.size()) / static_cast<double>(shared);
}

inline std::array<double, 5> calendar_coords(Timestamp t, Timestamp t0) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double h = two_pi * hour_of_day(t) / 24.0;
  const double d = two_pi * (day_of_year(t) - 1) / 365.25;
  return {std::sin(h), std::cos(h), std::sin(d), std::cos(d), static_cast<double>(t - t0) / 8760.0};
}

}  // namespace detail

/// Fills missing feature cells from the k nearest rows of the same site.
///
/// Distance uses only features observed in both rows, scaled by
/// sqrt(total/shared); donors must carry the missing feature. Rows that share
/// no observed feature are never neighbors; a cell with no eligible donor
/// falls back to the feature's site mean. Targets are left untouched.
inline SiteSeries impute_within_records(const SiteSeries& series, const ImputeConfig& cfg = {}) {
  if (cfg.k_neighbors < 1) throw UsageError("impute_within_records: k_neighbors must be positive");
  SiteSeries out = series;
  const auto& cols = series.features;
  const std::size_t n = series.size(), m = cols.size();
  if (n == 0) return out;

  std::vector<double> col_mean(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (double v : cols[j]) {
      if (!std::isnan(v)) {
        sum += v;
        ++cnt;
      }
    }
    if (cnt == 0) throw DataError("impute_within_records: site " + series.site_id + ": feature #" + std::to_string(j) + " is missing in every row");
    col_mean[j] = sum / static_cast<double>(cnt);
  }

  std::vector<double> dist(n);
  std::vector<detail::Neighbor> cands;
  for (std::size_t i = 0; i < n; ++i) {
    bool any_missing = false;
    for (std::size_t j = 0; j < m; ++j) any_missing |= std::isnan(cols[j][i]);
    if (!any_missing) continue;
    for (std::size_t r = 0; r < n; ++r) dist[r] = r == i ? std::numeric_limits<double>::quiet_NaN() : detail::partial_sq_distance(cols, i, r);
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isnan(cols[j][i])) continue;
      cands.clear();
      for (std::size_t r = 0; r < n; ++r) {
        if (!std::isnan(dist[r]) && !std::isnan(cols[j][r])) cands.push_back({dist[r], r});
      }
      if (cands.empty()) {
        out.features[j][i] = col_mean[j];
        continue;
      }
      detail::keep_k_nearest(cands, static_cast<std::size_t>(cfg.k_neighbors));
      double sum = 0.0;
      for (const auto& c : cands) sum += cols[j][c.index];
      out.features[j][i] = sum / static_cast<double>(cands.size());
    }
  }
  return out;
}

/// Adds feature-name context to impute_within_records errors.
inline SiteSeries impute_within_records(const SiteSeries& series, const FeatureCatalog& catalog, const ImputeConfig& cfg) {
  for (std::size_t j = 0; j < series.features.size() && j < catalog.size(); ++j) {
    const auto& col = series.features[j];
    if (!col.empty() && std::all_of(col.begin(), col.end(), [](double v) { return std::isnan(v); })) {
      throw DataError("impute_within_records: site " + series.site_id + ": feature '" + catalog[j].name + "' is missing in every row");
    }
  }
  return impute_within_records(series, cfg);
}

/// Materializes absent hourly records. Each synthesized record takes the
/// uniform mean of its k nearest existing records in calendar space
/// (sin/cos hour-of-day, sin/cos day-of-year, years since first record) and
/// is flagged with gap_flag = 1.
inline SiteSeries impute_sequence_gaps(const SiteSeries& series, const ImputeConfig& cfg = {}) {
  if (cfg.k_neighbors < 1) throw UsageError("impute_sequence_gaps: k_neighbors must be positive");
  if (series.size() == 0 || series.contiguous()) return series;
  const std::size_t n = series.size(), m = series.features.size();
  const std::size_t k = static_cast<std::size_t>(cfg.k_neighbors);
  if (n < k) {
    throw DataError("impute_sequence_gaps: site " + series.site_id + " has " + std::to_string(n) + " records, fewer than k=" + std::to_string(k));
  }
  const Timestamp t0 = series.timestamps.front();
  std::vector<std::array<double, 5>> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = detail::calendar_coords(series.timestamps[i], t0);

  const bool has_est = !series.estimated_target.empty();
  SiteSeries out;
  out.site_id = series.site_id;
  out.statics = series.statics;
  const std::size_t total = static_cast<std::size_t>(series.span_hours());
  out.timestamps.reserve(total);
  out.target.reserve(total);
  out.gap_flag.reserve(total);
  out.features.assign(m, {});
  for (auto& c : out.features) c.reserve(total);
  if (has_est) out.estimated_target.reserve(total);

  auto neighbor_mean = [&](const std::vector<detail::Neighbor>& nb, const std::vector<double>& col) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const auto& c : nb) {
      const double v = col[c.index];
      if (!std::isnan(v)) {
        sum += v;
        ++cnt;
      }
    }
    return cnt == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(cnt);
  };

  std::vector<detail::Neighbor> cands;
  std::size_t src = 0;
  for (Timestamp t = t0; t <= series.timestamps.back(); ++t) {
    if (series.timestamps[src] == t) {
      out.timestamps.push_back(t);
      out.target.push_back(series.target[src]);
      out.gap_flag.push_back(series.gap_flag[src]);
      for (std::size_t j = 0; j < m; ++j) out.features[j].push_back(series.features[j][src]);
      if (has_est) out.estimated_target.push_back(series.estimated_target[src]);
      ++src;
      continue;
    }
    const auto q = detail::calendar_coords(t, t0);
    cands.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.size(); ++c) {
        const double d = q[c] - coords[r][c];
        s += d * d;
      }
      cands[r] = {s, r};
    }
    detail::keep_k_nearest(cands, k);
    out.timestamps.push_back(t);
    out.target.push_back(neighbor_mean(cands, series.target));
    out.gap_flag.push_back(1);
    for (std::size_t j = 0; j < m; ++j) out.features[j].push_back(neighbor_mean(cands, series.features[j]));
    if (has_est) out.estimated_target.push_back(neighbor_mean(cands, series.estimated_target));
  }
  return out;
}

/// Both imputation passes: missing cells first, then absent records.
inline std::vector<SiteSeries> gapfill_sites(const std::vector<SiteSeries>& sites, const FeatureCatalog& catalog,
                                             const ImputeConfig& cfg) {
  std::vector<SiteSeries> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back(impute_sequence_gaps(impute_within_records(s, catalog, cfg), cfg));
  return out;
}

}  // namespace fluxtft
