#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"

namespace fluxtft {

/// Pooled error metrics. `nse` is empty when the observations have zero
/// variance.
struct MetricReport {
  std::string label;
  std::size_t n = 0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> nse;
  double sse = 0.0;  // sum of squared residuals
  double sst = 0.0;  // sum of squared deviations from the observed mean

  nlohmann::json to_json() const {
    nlohmann::json j{{"n", n}, {"rmse", rmse}, {"mae", mae}, {"nse", nullptr}};
    if (nse) j["nse"] = *nse;
    if (!label.empty()) j["label"] = label;
    return j;
  }
};

inline MetricReport compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw UsageError("metrics: " + std::to_string(y.size()) + " observations vs " + std::to_string(yhat.size()) +
                     " predictions");
  }
  if (y.empty()) throw UsageError("metrics: empty input");
  double mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) throw DataError("metrics: non-finite value at " + std::to_string(i));
    mean += y[i];
  }
  const double n = static_cast<double>(y.size());
  mean /= n;
  MetricReport r;
  r.n = y.size();
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    r.sse += e * e;
    abs_sum += std::abs(e);
    r.sst += (y[i] - mean) * (y[i] - mean);
  }
  r.rmse = std::sqrt(r.sse / n);
  r.mae = abs_sum / n;
  if (r.sst > 0.0) r.nse = 1.0 - r.sse / r.sst;
  return r;
}

/// Per-group metrics, best NSE first (undefined NSE last, then by name),
/// plus the pooled overall report.
struct GroupBreakdown {
  std::vector<MetricReport> groups;
  MetricReport overall;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : groups) arr.push_back(g.to_json());
    return {{"groups", arr}, {"overall", overall.to_json()}};
  }
};

inline GroupBreakdown breakdown_by_group(std::span<const double> y, std::span<const double> yhat,
                                         const std::vector<std::string>& groups) {
  if (groups.size() != y.size()) throw UsageError("breakdown_by_group: one group label per sample required");
  GroupBreakdown b;
  b.overall = compute_metrics(y, yhat);
  b.overall.label = "overall";
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> parts;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& p = parts[groups[i]];
    p.first.push_back(y[i]);
    p.second.push_back(yhat[i]);
  }
  for (const auto& [g, p] : parts) {
    MetricReport r = compute_metrics(p.first, p.second);
    r.label = g;
    b.groups.push_back(r);
  }
  std::stable_sort(b.groups.begin(), b.groups.end(), [](const MetricReport& a, const MetricReport& c) {
    if (a.nse.has_value() != c.nse.has_value()) return a.nse.has_value();
    if (a.nse && *a.nse != *c.nse) return *a.nse > *c.nse;
    return a.label < c.label;
  });
  return b;
}

inline constexpr std::array<double, 5> kLossQuantileLevels = {0.05, 0.25, 0.50, 0.75, 0.95};

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw UsageError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct LossSummary {
  std::string group;
  std::size_t n = 0;
  std::array<double, 5> quantiles{};  // of |y - yhat| at kLossQuantileLevels
  double bin_width = 0.0;
  std::vector<std::size_t> histogram;

  nlohmann::json to_json() const {
    return {{"group", group}, {"n", n}, {"levels", kLossQuantileLevels}, {"quantiles", quantiles},
            {"bin_width", bin_width}, {"histogram", histogram}};
  }
};

/// Absolute-residual distribution per group. All groups share one set of
/// `n_bins` equal-width bins spanning [0, largest residual]; the top edge
/// falls into the last bin.
inline std::vector<LossSummary> loss_distribution(std::span<const double> y, std::span<const double> yhat,
                                                  const std::vector<std::string>& by, std::size_t n_bins = 20) {
  if (y.size() != yhat.size() || by.size() != y.size()) throw UsageError("loss_distribution: length mismatch");
  if (n_bins == 0) throw UsageError("loss_distribution: n_bins must be positive");
  std::map<std::string, std::vector<double>> res;
  double top = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = std::abs(y[i] - yhat[i]);
    res[by[i]].push_back(e);
    top = std::max(top, e);
  }
  const double width = top > 0.0 ? top / static_cast<double>(n_bins) : 1.0;
  std::vector<LossSummary> out;
  for (auto& [g, v] : res) {
    std::sort(v.begin(), v.end());
    LossSummary s;
    s.group = g;
    s.n = v.size();
    for (std::size_t q = 0; q < kLossQuantileLevels.size(); ++q) s.quantiles[q] = sorted_quantile(v, kLossQuantileLevels[q]);
    s.bin_width = width;
    s.histogram.assign(n_bins, 0);
    for (double e : v) s.histogram[std::min(static_cast<std::size_t>(e / width), n_bins - 1)]++;
    out.push_back(std::move(s));
  }
  return out;
}

/// Aligned text table: label, RMSE, MAE, NSE, N.
inline std::string metrics_table(const std::vector<MetricReport>& rows, const std::string& first_column = "Model") {
  std::size_t w = first_column.size();
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << first_column << "  " << std::right << std::setw(9) << "RMSE"
     << std::setw(9) << "MAE" << std::setw(9) << "NSE" << std::setw(10) << "N" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.label << "  " << std::right << std::setw(9)
       << text::fixed(r.rmse, 3) << std::setw(9) << text::fixed(r.mae, 3) << std::setw(9)
       << (r.nse ? text::fixed(*r.nse, 3) : std::string("undef")) << std::setw(10) << r.n << "\n";
  }
  return os.str();
}

}  // namespace fluxtft
