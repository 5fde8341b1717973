#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/rng.hpp"
#include "fluxtft/core/time.hpp"
#include "fluxtft/dataset.hpp"

namespace fluxtft::synth {

struct SynthConfig {
  int n_sites = 10;
  int years = 1;
  std::uint64_t seed = 0;
  double missing_frac = 0.0;  // fraction of time-varying feature cells set missing
  double gap_frac = 0.0;      // fraction of hourly records removed
  int start_year = 2010;
  int n_groups = 8;  // vegetation templates in use, cycled over sites

  void validate() const {
    if (n_sites < 1) throw UsageError("synth: n_sites must be >= 1");
    if (years < 1) throw UsageError("synth: years must be >= 1");
    if (!(missing_frac >= 0.0 && missing_frac <= 0.5)) throw UsageError("synth: missing_frac must lie in [0, 0.5]");
    if (!(gap_frac >= 0.0 && gap_frac <= 0.5)) throw UsageError("synth: gap_frac must lie in [0, 0.5]");
    if (n_groups < 1 || n_groups > 8) throw UsageError("synth: n_groups must lie in [1, 8]");
  }

  nlohmann::json to_json() const {
    return {{"n_sites", n_sites}, {"years", years}, {"seed", seed}, {"missing_frac", missing_frac},
            {"gap_frac", gap_frac}, {"start_year", start_year}, {"n_groups", n_groups}};
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_sites = j.value("n_sites", c.n_sites);
    c.years = j.value("years", c.years);
    c.seed = j.value("seed", c.seed);
    c.missing_frac = j.value("missing_frac", c.missing_frac);
    c.gap_frac = j.value("gap_frac", c.gap_frac);
    c.start_year = j.value("start_year", c.start_year);
    c.n_groups = j.value("n_groups", c.n_groups);
    c.validate();
    return c;
  }
};

/// Vegetation-type template for generated sites.
struct GroupTemplate {
  const char* igbp;
  const char* koppen;
  const char* koppen_sub;
  double lat_lo, lat_hi;
  double t_mean;  // annual mean temperature, deg C
  double t_season;  // seasonal half-amplitude
  double t_opt;   // temperature optimum of the target
  double amplitude;  // light-saturated target scale
  double veg_floor;  // dormant-season vegetation factor
};

inline const std::vector<GroupTemplate>& group_templates() {
  static const std::vector<GroupTemplate> g = {
      {"ENF", "D", "Dfb", 45, 62, 5, 11, 16, 26, 0.35},   {"DBF", "C", "Cfb", 38, 52, 11, 9, 21, 30, 0.1},
      {"GRA", "C", "Cfa", 30, 48, 13, 10, 22, 24, 0.25},  {"CRO", "D", "Dfa", 35, 48, 10, 13, 24, 32, 0.05},
      {"SAV", "A", "Aw", -25, -10, 23, 5, 28, 22, 0.3},   {"EBF", "A", "Af", -12, 4, 25, 2, 27, 30, 0.8},
      {"OSH", "B", "BSk", -38, -28, 15, 8, 20, 18, 0.3},  {"WET", "D", "Dfc", 50, 65, 2, 12, 16, 22, 0.1},
  };
  return g;
}

/// What the generator used, for checks against recovered structure.
struct GroundTruth {
  std::vector<std::string> drivers{"SW_IN", "TA"};
  struct Site {
    std::string site_id;
    std::string igbp;
    double amplitude = 0.0;
    double t_opt = 0.0;
  };
  std::vector<Site> sites;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sites) arr.push_back({{"site_id", s.site_id}, {"igbp", s.igbp}, {"amplitude", s.amplitude}, {"t_opt", s.t_opt}});
    return {{"drivers", drivers}, {"sites", arr}};
  }
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

inline FeatureCatalog synth_catalog() {
  return FeatureCatalog({{"SW_IN", Role::known, Kind::real, Cadence::hourly},
                         {"TA", Role::known, Kind::real, Cadence::hourly},
                         {"VPD", Role::known, Kind::real, Cadence::hourly},
                         {"P", Role::known, Kind::real, Cadence::hourly},
                         {"NDVI", Role::known, Kind::real, Cadence::daily},
                         {"LAI", Role::known, Kind::real, Cadence::four_day}});
}

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Sine of the solar elevation at local solar time.
inline double solar_sine(double lat_deg, int doy, double hour) {
  const double lat = lat_deg * std::numbers::pi / 180.0;
  const double decl = 23.44 * std::numbers::pi / 180.0 * std::sin(kTwoPi * (284.0 + doy) / 365.0);
  const double omega = (hour - 12.0) * std::numbers::pi / 12.0;
  return std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(omega);
}

/// Growing-season curve in [0, 1] peaking at `peak_doy`.
inline double season(int doy, double peak_doy) {
  const double c = 0.5 * (1.0 + std::cos(kTwoPi * (doy - peak_doy) / 365.25));
  return c * c;
}

inline double saturation_vp(double t) { return 0.6108 * std::exp(17.27 * t / (t + 237.3)); }

/// Removes `count` interior records in short runs; first and last are kept.
inline std::vector<char> gap_mask(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<char> drop(n, 0);
  if (n < 3) return drop;
  count = std::min(count, n - 2);
  std::size_t removed = 0;
  while (removed < count) {
    const std::size_t start = 1 + static_cast<std::size_t>(rng.below(n - 2));
    const std::size_t len = 1 + static_cast<std::size_t>(rng.below(24));
    for (std::size_t i = start; i < std::min(start + len, n - 1) && removed < count; ++i) {
      if (!drop[i]) {
        drop[i] = 1;
        ++removed;
      }
    }
  }
  return drop;
}

}  // namespace detail

/// Generates hourly sites. All randomness is drawn from per-site streams
/// derived from the seed, so a site does not depend on how many others exist.
inline SynthResult generate_sites(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult out;
  out.dataset.catalog = synth_catalog();
  const auto& groups = group_templates();
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng assign(Rng::derive(cfg.seed, 0xA55));
  assign.shuffle(order);

  const std::size_t hours = static_cast<std::size_t>(8760) * static_cast<std::size_t>(cfg.years);
  const Timestamp t0 = make_timestamp(cfg.start_year, 1, 1, 0);
  const std::size_t n_days = hours / 24 + 1;

  for (int si = 0; si < cfg.n_sites; ++si) {
    const GroupTemplate& g = groups[order[static_cast<std::size_t>(si % cfg.n_groups)]];
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(si) + 1));
    SiteSeries s;
    char id[16];
    std::snprintf(id, sizeof id, "SYN%03d", si + 1);
    s.site_id = id;
    s.statics.igbp = g.igbp;
    s.statics.igbp_generic = igbp_generic_of(g.igbp);
    s.statics.koppen = g.koppen;
    s.statics.koppen_sub = g.koppen_sub;
    s.statics.latitude = std::round(rng.uniform(g.lat_lo, g.lat_hi) * 1e4) / 1e4;
    s.statics.longitude = std::round(rng.uniform(-120.0, 140.0) * 1e4) / 1e4;
    const bool south = s.statics.latitude < 0;
    const double amp = g.amplitude * rng.uniform(0.75, 1.25);
    const double t_opt = g.t_opt + rng.uniform(-1.5, 1.5);
    const double t_mean = g.t_mean + rng.uniform(-2.0, 2.0);
    const double t_peak = south ? 20.0 : 200.0;
    const double veg_peak = t_peak + rng.uniform(-15.0, 15.0);
    const double veg_floor = g.veg_floor;
    out.truth.sites.push_back({s.site_id, g.igbp, amp, t_opt});

    // daily processes: cloudiness, temperature anomaly, rain days
    std::vector<double> cloud(n_days), t_anom(n_days), ndvi(n_days);
    std::vector<char> rain(n_days);
    double c = 0.0, a = 0.0;
    for (std::size_t d = 0; d < n_days; ++d) {
      c = 0.7 * c + 0.3 * rng.normal(0.0, 1.6);
      a = 0.8 * a + rng.normal(0.0, 1.2);
      cloud[d] = 1.0 / (1.0 + std::exp(-(c - 0.3)));  // 0 clear .. 1 overcast
      t_anom[d] = a - 1.5 * cloud[d];
      rain[d] = rng.uniform() < 0.15 + 0.5 * cloud[d] * cloud[d];
    }
    for (std::size_t d = 0; d < n_days; ++d) {
      const int doy = day_of_year(t0 + static_cast<Timestamp>(24 * d));
      ndvi[d] = 0.15 + 0.65 * (veg_floor + (1.0 - veg_floor) * detail::season(doy, veg_peak)) + rng.normal(0.0, 0.015);
    }
    std::vector<double> lai_block;
    std::vector<double> sw(hours), ta(hours), vpd(hours), p(hours), nd(hours), lai(hours), gpp(hours);
    for (std::size_t h = 0; h < hours; ++h) {
      const Timestamp t = t0 + static_cast<Timestamp>(h);
      const int doy = day_of_year(t);
      const int hod = hour_of_day(t);
      const std::size_t d = h / 24;
      const double frac = (hod + 0.5) / 24.0;
      const double cl = d + 1 < n_days ? cloud[d] * (1 - frac) + cloud[d + 1] * frac : cloud[d];
      const double elev = detail::solar_sine(s.statics.latitude, doy, hod + 0.5);
      sw[h] = elev > 0 ? std::round(1050.0 * elev * (1.0 - 0.75 * cl) * 10.0) / 10.0 : 0.0;
      const double seasonal = t_mean + g.t_season * std::cos(detail::kTwoPi * (doy - t_peak) / 365.25);
      const double diurnal = (4.0 + 3.0 * (1.0 - cl)) * std::cos(detail::kTwoPi * (hod - 15.0) / 24.0);
      ta[h] = std::round((seasonal + diurnal + t_anom[d] + rng.normal(0.0, 0.4)) * 100.0) / 100.0;
      const double rh = std::clamp(55.0 + 35.0 * cl - 2.0 * diurnal + rng.normal(0.0, 4.0), 8.0, 100.0);
      vpd[h] = std::round(detail::saturation_vp(ta[h]) * (1.0 - rh / 100.0) * 1000.0) / 1000.0;
      p[h] = rain[d] && rng.uniform() < 0.25 ? std::round(-1.5 * std::log(1.0 - rng.uniform()) * 10.0) / 10.0 : 0.0;
      nd[h] = std::round(ndvi[d] * 1e4) / 1e4;
      const std::size_t block = static_cast<std::size_t>(doy - 1) / 4;
      const double veg = veg_floor + (1.0 - veg_floor) * detail::season(static_cast<int>(block * 4 + 1), veg_peak);
      lai[h] = std::round((0.3 + 5.0 * veg) * 100.0) / 100.0;
      const double veg_now = veg_floor + (1.0 - veg_floor) * detail::season(doy, veg_peak);
      const double light = sw[h] / (sw[h] + 400.0);
      const double temp = std::exp(-std::pow((ta[h] - t_opt) / 7.0, 2.0));
      double y = amp * light * temp * (0.75 + 0.25 * veg_now) * (1.0 + rng.normal(0.0, 0.04));
      gpp[h] = sw[h] > 0 ? std::max(0.0, std::round(y * 1e4) / 1e4) : 0.0;
    }

    Rng holes(Rng::derive(cfg.seed ^ 0x5EED, static_cast<std::uint64_t>(si) + 1));
    const auto drop = detail::gap_mask(hours, static_cast<std::size_t>(std::llround(cfg.gap_frac * hours)), holes);
    s.features.assign(out.dataset.catalog.size(), {});
    const std::vector<double>* cols[] = {&sw, &ta, &vpd, &p, &nd, &lai};
    for (std::size_t h = 0; h < hours; ++h) {
      if (drop[h]) continue;
      s.timestamps.push_back(t0 + static_cast<Timestamp>(h));
      s.target.push_back(gpp[h]);
      s.gap_flag.push_back(0);
      for (std::size_t j = 0; j < 6; ++j) s.features[j].push_back((*cols[j])[h]);
    }
    const std::size_t cells = s.size() * s.features.size();
    const std::size_t missing = static_cast<std::size_t>(std::llround(cfg.missing_frac * static_cast<double>(cells)));
    if (missing > 0) {
      std::vector<std::size_t> idx(cells);
      for (std::size_t i = 0; i < cells; ++i) idx[i] = i;
      for (std::size_t i = 0; i < missing; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(holes.below(cells - i));
        std::swap(idx[i], idx[j]);
        s.features[idx[i] % s.features.size()][idx[i] / s.features.size()] = std::nan("");
      }
    }
    out.dataset.sites.push_back(std::move(s));
  }
  return out;
}

}  // namespace fluxtft::synth
