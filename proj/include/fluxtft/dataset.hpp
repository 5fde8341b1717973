#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/core/time.hpp"

namespace fluxtft {

inline constexpr std::string_view kTargetName = "GPP";
inline constexpr std::string_view kGapFlagName = "gap_flag";

/// Known inputs derived from the timestamp and injected automatically.
enum class TimeFeature { hour_of_day, day_of_year, month, relative_time_index, global_time_index };

inline constexpr std::array<TimeFeature, 5> kTimeFeatures = {
    TimeFeature::hour_of_day, TimeFeature::day_of_year, TimeFeature::month, TimeFeature::relative_time_index,
    TimeFeature::global_time_index};

inline std::string_view time_feature_name(TimeFeature f) {
  switch (f) {
    case TimeFeature::hour_of_day: return "hour_of_day";
    case TimeFeature::day_of_year: return "day_of_year";
    case TimeFeature::month: return "month";
    case TimeFeature::relative_time_index: return "relative_time_index";
    case TimeFeature::global_time_index: return "global_time_index";
  }
  return "";
}

inline std::optional<TimeFeature> time_feature_from_name(std::string_view name) {
  for (TimeFeature f : kTimeFeatures) {
    if (time_feature_name(f) == name) return f;
  }
  return std::nullopt;
}

/// Value of a calendar-derived feature at an absolute timestamp. The relative
/// index depends on window position and is produced by the window builder.
inline double calendar_value(TimeFeature f, Timestamp t) {
  switch (f) {
    case TimeFeature::hour_of_day: return hour_of_day(t);
    case TimeFeature::day_of_year: return day_of_year(t);
    case TimeFeature::month: return month_of(t);
    case TimeFeature::global_time_index: return static_cast<double>(t);
    case TimeFeature::relative_time_index: break;
  }
  throw UsageError("calendar_value: relative_time_index is window-relative");
}

enum class Role { observed, known, static_ };
enum class Kind { real, categorical };
enum class Cadence { hourly, daily, four_day, eight_day, sixteen_day, monthly, annual, static_ };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::observed, "observed"}, {Role::known, "known"}, {Role::static_, "static"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Kind, {{Kind::real, "real"}, {Kind::categorical, "categorical"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Cadence, {{Cadence::hourly, "hourly"},
                                       {Cadence::daily, "daily"},
                                       {Cadence::four_day, "4day"},
                                       {Cadence::eight_day, "8day"},
                                       {Cadence::sixteen_day, "16day"},
                                       {Cadence::monthly, "monthly"},
                                       {Cadence::annual, "annual"},
                                       {Cadence::static_, "static"}})

/// Whether a value recorded at `stamp` still applies at `t >= stamp`.
inline bool cadence_covers(Cadence c, Timestamp stamp, Timestamp t) {
  const Timestamp age = t - stamp;
  switch (c) {
    case Cadence::hourly: return age == 0;
    case Cadence::daily: return age < 24;
    case Cadence::four_day: return age < 4 * 24;
    case Cadence::eight_day: return age < 8 * 24;
    case Cadence::sixteen_day: return age < 16 * 24;
    case Cadence::monthly: {
      const CivilDate a = date_of(stamp), b = date_of(t);
      return a.year == b.year && a.month == b.month;
    }
    case Cadence::annual: return year_of(stamp) == year_of(t);
    case Cadence::static_: return true;
  }
  return false;
}

struct FeatureSpec {
  std::string name;
  Role role = Role::known;
  Kind kind = Kind::real;
  Cadence cadence = Cadence::hourly;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline bool is_reserved_name(std::string_view name) {
  return name == kTargetName || name == kGapFlagName || time_feature_from_name(name).has_value() ||
         name == "latitude" || name == "longitude";
}

/// Declares the role, kind and cadence of every input column.
class FeatureCatalog {
 public:
  FeatureCatalog() = default;

  explicit FeatureCatalog(std::vector<FeatureSpec> entries) : entries_(std::move(entries)) {
    std::set<std::string> seen;
    for (const auto& e : entries_) {
      if (e.name.empty()) throw DataError("catalog: empty feature name");
      if (is_reserved_name(e.name)) throw DataError("catalog: reserved name '" + e.name + "'");
      if (!seen.insert(e.name).second) throw DataError("catalog: duplicate feature '" + e.name + "'");
    }
  }

  const std::vector<FeatureSpec>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name == name) return i;
    }
    return std::nullopt;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries_) {
      arr.push_back({{"name", e.name}, {"role", e.role}, {"kind", e.kind}, {"cadence", e.cadence}});
    }
    return {{"entries", arr}};
  }

  static FeatureCatalog from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
      throw DataError("catalog: expected {\"entries\": [...]}");
    }
    std::vector<FeatureSpec> out;
    for (const auto& e : j["entries"]) {
      FeatureSpec s;
      s.name = e.at("name").get<std::string>();
      s.role = parse_enum<Role>(e, "role", {"observed", "known", "static"});
      s.kind = parse_enum<Kind>(e, "kind", {"real", "categorical"});
      s.cadence = parse_enum<Cadence>(e, "cadence", {"hourly", "daily", "4day", "8day", "16day", "monthly", "annual", "static"});
      out.push_back(std::move(s));
    }
    return FeatureCatalog(std::move(out));
  }

  static FeatureCatalog load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(text::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  }

  void save(const std::string& path) const { text::write_file(path, to_json().dump(2) + "\n"); }

  friend bool operator==(const FeatureCatalog&, const FeatureCatalog&) = default;

 private:
  template <typename E>
  static E parse_enum(const nlohmann::json& e, const char* key, std::initializer_list<const char*> allowed) {
    const std::string v = e.at(key).get<std::string>();
    for (const char* a : allowed) {
      if (v == a) return nlohmann::json(v).get<E>();
    }
    throw DataError(std::string("catalog: invalid ") + key + " '" + v + "'");
  }

  std::vector<FeatureSpec> entries_;
};

/// Open/Closed Shrublands merge into Shrublands, Woody Savannas/Savannas into Savannas.
inline std::string igbp_generic_of(std::string_view igbp) {
  if (igbp == "OSH" || igbp == "CSH") return "SHR";
  if (igbp == "WSA" || igbp == "SAV") return "SAV";
  return std::string(igbp);
}

struct StaticCovariates {
  std::string igbp;
  std::string igbp_generic;
  std::string koppen;
  std::string koppen_sub;
  double latitude = 0.0;
  double longitude = 0.0;

  friend bool operator==(const StaticCovariates&, const StaticCovariates&) = default;
};

/// Static fields presented to models, in fixed order.
enum class StaticField { igbp, koppen, koppen_sub, latitude, longitude };
inline constexpr std::array<StaticField, 5> kStaticFields = {StaticField::igbp, StaticField::koppen,
                                                             StaticField::koppen_sub, StaticField::latitude,
                                                             StaticField::longitude};

inline std::string_view static_field_name(StaticField f) {
  switch (f) {
    case StaticField::igbp: return "igbp";
    case StaticField::koppen: return "koppen";
    case StaticField::koppen_sub: return "koppen_sub";
    case StaticField::latitude: return "latitude";
    case StaticField::longitude: return "longitude";
  }
  return "";
}

inline bool static_field_is_categorical(StaticField f) {
  return f == StaticField::igbp || f == StaticField::koppen || f == StaticField::koppen_sub;
}

inline std::string static_category(const StaticCovariates& s, StaticField f) {
  switch (f) {
    case StaticField::igbp: return s.igbp;
    case StaticField::koppen: return s.koppen;
    case StaticField::koppen_sub: return s.koppen_sub;
    default: throw UsageError("static_category: real field");
  }
}

inline double static_real(const StaticCovariates& s, StaticField f) {
  if (f == StaticField::latitude) return s.latitude;
  if (f == StaticField::longitude) return s.longitude;
  throw UsageError("static_real: categorical field");
}

/// One flux-tower site. Columns of `features` follow the catalog order.
struct SiteSeries {
  std::string site_id;
  StaticCovariates statics;
  std::vector<Timestamp> timestamps;
  std::vector<double> target;
  std::vector<std::vector<double>> features;
  std::vector<std::uint8_t> gap_flag;
  /// Per-timestamp target estimate from a tree model; empty unless attached.
  std::vector<double> estimated_target;

  std::size_t size() const { return timestamps.size(); }

  bool contiguous() const {
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (timestamps[i] != timestamps[i - 1] + 1) return false;
    }
    return true;
  }

  Timestamp span_hours() const { return timestamps.empty() ? 0 : timestamps.back() - timestamps.front() + 1; }

  /// Throws if column lengths disagree or timestamps are not strictly increasing.
  void validate(std::size_t n_features) const {
    const std::size_t n = timestamps.size();
    if (target.size() != n || gap_flag.size() != n || features.size() != n_features) {
      throw DataError("site " + site_id + ": column length mismatch");
    }
    for (const auto& col : features) {
      if (col.size() != n) throw DataError("site " + site_id + ": feature column length mismatch");
    }
    if (!estimated_target.empty() && estimated_target.size() != n) {
      throw DataError("site " + site_id + ": estimated target length mismatch");
    }
    for (std::size_t i = 1; i < n; ++i) {
      if (timestamps[i] <= timestamps[i - 1]) throw DataError("site " + site_id + ": timestamps not increasing");
    }
  }
};

namespace detail {

inline bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

inline bool same_series(const SiteSeries& a, const SiteSeries& b) {
  auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same_value);
  };
  if (a.site_id != b.site_id || !(a.statics == b.statics) || a.timestamps != b.timestamps ||
      a.gap_flag != b.gap_flag || !eq(a.target, b.target) || !eq(a.estimated_target, b.estimated_target) ||
      a.features.size() != b.features.size()) {
    return false;
  }
  for (std::size_t j = 0; j < a.features.size(); ++j) {
    if (!eq(a.features[j], b.features[j])) return false;
  }
  return true;
}

struct LineReader {
  std::ifstream in;
  std::string path;
  std::size_t line_no = 0;
  std::string line;

  explicit LineReader(const std::string& p) : in(p), path(p) {
    if (!in) throw DataError("cannot open " + p);
  }
  bool next() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!text::trim(line).empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path + ":" + std::to_string(line_no) + ": " + msg);
  }
};

}  // namespace detail

/// NaN-aware exact equality of two site lists.
inline bool same_sites(const std::vector<SiteSeries>& a, const std::vector<SiteSeries>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!detail::same_series(a[i], b[i])) return false;
  }
  return true;
}

inline std::vector<std::pair<std::string, StaticCovariates>> read_sites_meta(const std::string& path) {
  detail::LineReader r(path);
  std::vector<std::pair<std::string, StaticCovariates>> out;
  if (!r.next()) return out;
  {
    const auto h = text::split_csv(r.line);
    const std::vector<std::string_view> expect = {"site_id", "igbp", "koppen", "koppen_sub", "lat", "lon"};
    if (h != expect) r.fail("expected header site_id,igbp,koppen,koppen_sub,lat,lon");
  }
  std::set<std::string> seen;
  while (r.next()) {
    const auto f = text::split_csv(r.line);
    if (f.size() != 6) r.fail("expected 6 fields");
    if (f[0].empty()) r.fail("empty site_id");
    StaticCovariates s;
    s.igbp = std::string(f[1]);
    s.igbp_generic = igbp_generic_of(s.igbp);
    s.koppen = std::string(f[2]);
    s.koppen_sub = std::string(f[3]);
    const auto lat = text::parse_double(f[4]);
    const auto lon = text::parse_double(f[5]);
    if (!lat || !lon || std::isnan(*lat) || std::isnan(*lon)) r.fail("invalid coordinates");
    if (*lat < -90 || *lat > 90 || *lon < -180 || *lon > 180) r.fail("coordinates out of range");
    s.latitude = *lat;
    s.longitude = *lon;
    if (!seen.insert(std::string(f[0])).second) r.fail("duplicate site '" + std::string(f[0]) + "'");
    out.emplace_back(std::string(f[0]), std::move(s));
  }
  return out;
}

/// Reads long-format records (site_id,timestamp,feature,value) and aligns
/// them to per-site hourly series.
///
/// A record exists at every timestamp carrying a non-missing target value.
/// Coarse-cadence features are forward-filled from their latest row while
/// that row's cadence still covers the timestamp; "nan" rows end a fill.
inline std::vector<SiteSeries> ingest_csv(const std::string& sites_meta_path, const std::string& records_path,
                                          const FeatureCatalog& catalog) {
  const auto meta = read_sites_meta(sites_meta_path);
  std::unordered_map<std::string, std::size_t> meta_index;
  for (std::size_t i = 0; i < meta.size(); ++i) meta_index.emplace(meta[i].first, i);

  struct Raw {
    std::map<Timestamp, double> target;
    std::map<Timestamp, std::uint8_t> gap;
    std::vector<std::map<Timestamp, double>> features;
  };
  std::map<std::size_t, Raw> raw;  // keyed by metadata order

  detail::LineReader r(records_path);
  if (r.next()) {
    const auto h = text::split_csv(r.line);
    const std::vector<std::string_view> expect = {"site_id", "timestamp", "feature", "value"};
    if (h != expect) r.fail("expected header site_id,timestamp,feature,value");
    while (r.next()) {
      const auto f = text::split_csv(r.line);
      if (f.size() != 4) r.fail("expected 4 fields");
      const auto site = meta_index.find(std::string(f[0]));
      if (site == meta_index.end()) r.fail("site '" + std::string(f[0]) + "' missing from site metadata");
      const auto ts = parse_timestamp(f[1]);
      if (!ts) r.fail("invalid timestamp '" + std::string(f[1]) + "'");
      const auto value = text::parse_double(f[3]);
      if (!value) r.fail("invalid value '" + std::string(f[3]) + "'");
      Raw& rs = raw[site->second];
      if (rs.features.empty()) rs.features.resize(catalog.size());
      bool inserted = false;
      if (f[2] == kTargetName) {
        inserted = rs.target.emplace(*ts, *value).second;
      } else if (f[2] == kGapFlagName) {
        if (*value != 0.0 && *value != 1.0) r.fail("gap_flag must be 0 or 1");
        inserted = rs.gap.emplace(*ts, static_cast<std::uint8_t>(*value)).second;
      } else {
        const auto j = catalog.index_of(f[2]);
        if (!j) r.fail("unknown feature '" + std::string(f[2]) + "'");
        inserted = rs.features[*j].emplace(*ts, *value).second;
      }
      if (!inserted) r.fail("duplicate record for (" + std::string(f[0]) + ", " + std::string(f[1]) + ", " + std::string(f[2]) + ")");
    }
  }

  std::vector<SiteSeries> out;
  for (auto& [idx, rs] : raw) {
    SiteSeries s;
    s.site_id = meta[idx].first;
    s.statics = meta[idx].second;
    for (const auto& [t, v] : rs.target) {
      if (std::isnan(v)) continue;
      s.timestamps.push_back(t);
      s.target.push_back(v);
      const auto g = rs.gap.find(t);
      s.gap_flag.push_back(g == rs.gap.end() ? 0 : g->second);
    }
    if (rs.features.empty()) rs.features.resize(catalog.size());
    s.features.assign(catalog.size(), std::vector<double>(s.timestamps.size(), std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t j = 0; j < catalog.size(); ++j) {
      const auto& rows = rs.features[j];
      if (rows.empty()) continue;
      for (std::size_t i = 0; i < s.timestamps.size(); ++i) {
        const Timestamp t = s.timestamps[i];
        auto it = rows.upper_bound(t);
        if (it == rows.begin()) continue;
        --it;
        if (cadence_covers(catalog[j].cadence, it->first, t)) s.features[j][i] = it->second;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Writes sites in the schema read by ingest_csv. Coarse features are emitted
/// only where re-ingestion would otherwise infer a different value, so the
/// round trip is exact.
inline void write_csv(const std::vector<SiteSeries>& sites, const FeatureCatalog& catalog,
                      const std::string& sites_meta_path, const std::string& records_path) {
  std::ostringstream meta;
  meta << "site_id,igbp,koppen,koppen_sub,lat,lon\n";
  for (const auto& s : sites) {
    meta << s.site_id << ',' << s.statics.igbp << ',' << s.statics.koppen << ',' << s.statics.koppen_sub << ','
         << text::format_double(s.statics.latitude) << ',' << text::format_double(s.statics.longitude) << '\n';
  }
  text::write_file(sites_meta_path, meta.str());

  std::ofstream rec(records_path, std::ios::binary);
  if (!rec) throw DataError("cannot write " + records_path);
  rec << "site_id,timestamp,feature,value\n";
  for (const auto& s : sites) {
    s.validate(catalog.size());
    struct Last {
      bool any = false;
      Timestamp t = 0;
      double v = 0;
    };
    std::vector<Last> last(catalog.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Timestamp t = s.timestamps[i];
      const std::string ts = format_timestamp(t);
      if (!std::isnan(s.target[i])) rec << s.site_id << ',' << ts << ',' << kTargetName << ',' << text::format_double(s.target[i]) << '\n';
      if (s.gap_flag[i]) rec << s.site_id << ',' << ts << ',' << kGapFlagName << ",1\n";
      for (std::size_t j = 0; j < catalog.size(); ++j) {
        const double v = s.features[j][i];
        const double inferred = last[j].any && cadence_covers(catalog[j].cadence, last[j].t, t)
                                    ? last[j].v
                                    : std::numeric_limits<double>::quiet_NaN();
        if (detail::same_value(v, inferred)) continue;
        rec << s.site_id << ',' << ts << ',' << catalog[j].name << ',' << text::format_double(v) << '\n';
        last[j] = {true, t, v};
      }
    }
  }
  if (!rec) throw DataError("write failed: " + records_path);
}

/// Fraction of absent hourly records between the first and last timestamp.
inline double missing_record_fraction(const SiteSeries& s) {
  const auto span = s.span_hours();
  if (span == 0) return 1.0;
  return 1.0 - static_cast<double>(s.size()) / static_cast<double>(span);
}

/// Keeps sites spanning at least `min_span_hours` with at most
/// `max_missing_frac` of records absent.
inline std::vector<SiteSeries> filter_sites(const std::vector<SiteSeries>& series, std::int64_t min_span_hours = 8760,
                                            double max_missing_frac = 0.20) {
  if (!(max_missing_frac >= 0.0 && max_missing_frac <= 1.0)) {
    throw UsageError("filter_sites: max_missing_frac must lie in [0, 1]");
  }
  std::vector<SiteSeries> out;
  for (const auto& s : series) {
    if (s.span_hours() >= min_span_hours && missing_record_fraction(s) <= max_missing_frac) out.push_back(s);
  }
  return out;
}

/// Reads a dataset directory: sites_meta.csv, records.csv, catalog.json.
struct DatasetPaths {
  std::string dir;
  std::string meta() const { return dir + "/sites_meta.csv"; }
  std::string records() const { return dir + "/records.csv"; }
  std::string catalog() const { return dir + "/catalog.json"; }
};

struct Dataset {
  FeatureCatalog catalog;
  std::vector<SiteSeries> sites;
};

inline Dataset load_dataset(const std::string& dir) {
  const DatasetPaths p{dir};
  Dataset d;
  d.catalog = FeatureCatalog::load(p.catalog());
  d.sites = ingest_csv(p.meta(), p.records(), d.catalog);
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
  const DatasetPaths p{dir};
  d.catalog.save(p.catalog());
  write_csv(d.sites, d.catalog, p.meta(), p.records());
}

}  // namespace fluxtft
