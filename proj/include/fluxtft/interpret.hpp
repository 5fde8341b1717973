#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/core/time.hpp"
#include "fluxtft/svg.hpp"
#include "fluxtft/tft/capture.hpp"

namespace fluxtft {

/// Mean attention curve over relative encoder index (-k..-1).
struct GroupCurve {
  std::string group;
  std::size_t snapshots = 0;
  std::vector<double> attention;
};

/// Averages snapshot attention per group. With an empty `groups` list every
/// group present is returned, sorted by name; otherwise the requested order is
/// kept and each requested group must have at least one snapshot.
inline std::vector<GroupCurve> attention_by_group(const std::vector<InterpretationSnapshot>& snaps,
                                                  const std::map<std::string, std::string>& site_group,
                                                  const std::vector<std::string>& groups = {}) {
  std::map<std::string, GroupCurve> acc;
  std::size_t k = 0;
  for (const auto& s : snaps) {
    const auto it = site_group.find(s.site_id);
    if (it == site_group.end()) throw UsageError("attention_by_group: no group for site " + s.site_id);
    if (k == 0) k = s.encoder_length();
    if (s.encoder_length() != k) throw UsageError("attention_by_group: snapshots differ in encoder length");
    GroupCurve& c = acc[it->second];
    c.group = it->second;
    if (c.attention.empty()) c.attention.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) c.attention[i] += s.attention[i];
    c.snapshots++;
  }
  for (auto& [g, c] : acc) {
    for (double& v : c.attention) v /= static_cast<double>(c.snapshots);
  }
  std::vector<GroupCurve> out;
  if (groups.empty()) {
    for (auto& [g, c] : acc) out.push_back(std::move(c));
    return out;
  }
  for (const auto& g : groups) {
    const auto it = acc.find(g);
    if (it == acc.end()) throw UsageError("attention_by_group: no snapshots for group '" + g + "'");
    out.push_back(it->second);
  }
  return out;
}

struct FeatureImportance {
  std::string feature;
  double percent = 0.0;
};

/// Mean importance per feature over encoder positions and snapshots, in
/// percent, descending (ties by name). Sums to 100 over all features.
inline std::vector<FeatureImportance> feature_importance_pct(const std::vector<InterpretationSnapshot>& snaps,
                                                             const std::vector<std::string>& features) {
  if (snaps.empty()) throw UsageError("top_features: no snapshots");
  std::vector<double> sum(features.size(), 0.0);
  double rows = 0.0;
  for (const auto& s : snaps) {
    if (s.n_features() != features.size()) throw UsageError("top_features: feature count mismatch");
    for (std::size_t i = 0; i < s.encoder_length(); ++i) {
      for (std::size_t f = 0; f < features.size(); ++f) sum[f] += s.weight(i, f);
    }
    rows += static_cast<double>(s.encoder_length());
  }
  std::vector<FeatureImportance> out;
  for (std::size_t f = 0; f < features.size(); ++f) out.push_back({features[f], 100.0 * sum[f] / rows});
  std::stable_sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
    return a.percent != b.percent ? a.percent > b.percent : a.feature < b.feature;
  });
  return out;
}

inline std::vector<FeatureImportance> top_features(const std::vector<InterpretationSnapshot>& snaps,
                                                   const std::vector<std::string>& features, std::size_t cut = 15) {
  auto all = feature_importance_pct(snaps, features);
  if (all.size() > cut) all.resize(cut);
  return all;
}

inline std::string top_features_csv(const std::vector<FeatureImportance>& rows) {
  std::ostringstream os;
  os << "rank,feature,importance_pct\n";
  for (std::size_t i = 0; i < rows.size(); ++i) os << (i + 1) << ',' << rows[i].feature << ',' << text::fixed(rows[i].percent, 6) << '\n';
  return os.str();
}

namespace detail {

inline void write_svg(const std::string& path, const std::string& content) {
  try {
    text::write_file(path, content);
  } catch (const std::exception& e) {
    throw DataError(std::string("cannot write figure: ") + e.what());
  }
}

inline double relative_index(std::size_t i, std::size_t k) { return static_cast<double>(i) - static_cast<double>(k); }

}  // namespace detail

/// Stacked importance areas for the selected features plus the attention
/// curve on a secondary axis.
inline std::string snapshot_svg(const InterpretationSnapshot& snap, const std::vector<std::string>& features,
                                const std::vector<std::string>& selected) {
  const std::size_t k = snap.encoder_length();
  if (k == 0) throw UsageError("render_snapshot_svg: empty snapshot");
  std::vector<std::size_t> cols;
  for (const auto& name : selected) {
    const auto it = std::find(features.begin(), features.end(), name);
    if (it == features.end()) throw UsageError("render_snapshot_svg: unknown feature '" + name + "'");
    cols.push_back(static_cast<std::size_t>(it - features.begin()));
  }
  std::vector<double> stack_top(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c : cols) stack_top[i] += snap.weight(i, c);
  }
  const double imp_max = svg::nice_ceiling(std::max(*std::max_element(stack_top.begin(), stack_top.end()), 1e-12));
  const double att_max = svg::nice_ceiling(std::max(*std::max_element(snap.attention.begin(), snap.attention.end()), 1e-12));

  svg::Document doc(820, 420);
  svg::Frame f;
  f.x0 = detail::relative_index(0, k);
  f.x1 = -1;
  if (f.x1 <= f.x0) f.x0 = f.x1 - 1;
  f.y0 = 0;
  f.y1 = imp_max;
  doc.text(f.left + f.width / 2, 22, snap.site_id + " " + format_timestamp(snap.origin), "middle", 14);

  std::vector<double> lower(k, 0.0);
  for (std::size_t s = 0; s < cols.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    std::vector<double> upper(k);
    for (std::size_t i = 0; i < k; ++i) upper[i] = lower[i] + snap.weight(i, cols[s]);
    for (std::size_t i = 0; i < k; ++i) pts.emplace_back(f.x(detail::relative_index(i, k)), f.y(upper[i]));
    for (std::size_t i = k; i-- > 0;) pts.emplace_back(f.x(detail::relative_index(i, k)), f.y(lower[i]));
    doc.area(pts, svg::color(s), selected[s]);
    lower = upper;
  }
  svg::y_axis(doc, f, false, 5, "importance");
  svg::x_axis(doc, f, svg::integer_ticks(f.x0, f.x1), "hours before prediction");

  svg::Frame fa = f;
  fa.y1 = att_max;
  std::vector<std::pair<double, double>> line;
  for (std::size_t i = 0; i < k; ++i) line.emplace_back(fa.x(detail::relative_index(i, k)), fa.y(snap.attention[i]));
  doc.polyline(line, "#000000", 1.5, "attention", "attention");
  svg::y_axis(doc, fa, true, 5, "attention");

  const double lx = f.right() + 85;
  double ly = f.top + 4;
  for (std::size_t s = 0; s < cols.size(); ++s, ly += 18) {
    doc.rect(lx, ly - 9, 12, 12, svg::color(s), "legend");
    doc.text(lx + 18, ly + 1, selected[s], "start", 11);
  }
  doc.line(lx, ly - 3, lx + 12, ly - 3, "#000000", 1.5, "legend");
  doc.text(lx + 18, ly + 1, "attention", "start", 11);
  return doc.str();
}

inline void render_snapshot_svg(const InterpretationSnapshot& snap, const std::vector<std::string>& features,
                                const std::vector<std::string>& selected, const std::string& path) {
  detail::write_svg(path, snapshot_svg(snap, features, selected));
}

/// Vertical range used for group attention figures: [0, nice ceiling of the
/// largest value].
inline std::pair<double, double> attention_axis_range(const std::vector<GroupCurve>& curves) {
  double mx = 0.0;
  for (const auto& c : curves) {
    for (double v : c.attention) mx = std::max(mx, v);
  }
  return {0.0, svg::nice_ceiling(std::max(mx, 1e-12))};
}

inline std::string group_attention_svg(const std::vector<GroupCurve>& curves) {
  if (curves.empty()) throw UsageError("render_group_attention_svg: no curves");
  const std::size_t k = curves.front().attention.size();
  for (const auto& c : curves) {
    if (c.attention.size() != k || k == 0) throw UsageError("render_group_attention_svg: curves differ in length");
  }
  const auto [lo, hi] = attention_axis_range(curves);
  svg::Document doc(820, 420);
  svg::Frame f;
  f.x0 = detail::relative_index(0, k);
  f.x1 = -1;
  if (f.x1 <= f.x0) f.x0 = f.x1 - 1;
  f.y0 = lo;
  f.y1 = hi;
  doc.text(f.left + f.width / 2, 22, "attention by group", "middle", 14);
  doc.raw("<g class=\"plot\" data-ymin=\"" + text::format_double(lo) + "\" data-ymax=\"" + text::format_double(hi) + "\">");
  for (std::size_t g = 0; g < curves.size(); ++g) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < k; ++i) pts.emplace_back(f.x(detail::relative_index(i, k)), f.y(curves[g].attention[i]));
    doc.polyline(pts, svg::color(g), 1.5, "curve", curves[g].group);
  }
  doc.raw("</g>");
  svg::y_axis(doc, f, false, 5, "attention");
  svg::x_axis(doc, f, svg::integer_ticks(f.x0, f.x1), "hours before prediction");
  const double lx = f.right() + 20;
  double ly = f.top + 4;
  for (std::size_t g = 0; g < curves.size(); ++g, ly += 18) {
    doc.line(lx, ly - 3, lx + 14, ly - 3, svg::color(g), 2.0, "legend");
    doc.text(lx + 20, ly + 1, curves[g].group, "start", 11);
  }
  return doc.str();
}

inline void render_group_attention_svg(const std::vector<GroupCurve>& curves, const std::string& path) {
  detail::write_svg(path, group_attention_svg(curves));
}

}  // namespace fluxtft
