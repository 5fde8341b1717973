#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "fluxtft/core/rng.hpp"
#include "fluxtft/core/time.hpp"
#include "fluxtft/dataset.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fluxtft_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

/// Two-feature catalog: SW_IN known, TA observed.
inline fluxtft::FeatureCatalog tiny_catalog() {
  using namespace fluxtft;
  return FeatureCatalog({{"SW_IN", Role::known, Kind::real, Cadence::hourly}, {"TA", Role::observed, Kind::real, Cadence::hourly}});
}

/// Contiguous hourly site with random features and a target driven by them.
inline fluxtft::SiteSeries tiny_site(const std::string& id, std::size_t hours, std::uint64_t seed,
                                     const std::string& igbp = "ENF") {
  using namespace fluxtft;
  Rng rng(seed);
  SiteSeries s;
  s.site_id = id;
  s.statics = {igbp, igbp_generic_of(igbp), "C", "Cfb", 45.0 + static_cast<double>(seed % 7), 7.0 - static_cast<double>(seed % 5)};
  s.features.resize(2);
  const Timestamp t0 = make_timestamp(2010, 1, 1, 0);
  for (std::size_t h = 0; h < hours; ++h) {
    const double sw = std::max(0.0, 600.0 * std::sin(static_cast<double>(h % 24) / 24.0 * 6.2831853) + rng.normal(0, 20));
    const double ta = 10.0 + 5.0 * std::cos(static_cast<double>(h % 24) / 24.0 * 6.2831853) + rng.normal(0, 1);
    s.timestamps.push_back(t0 + static_cast<Timestamp>(h));
    s.features[0].push_back(sw);
    s.features[1].push_back(ta);
    s.target.push_back(0.02 * sw + 0.3 * ta + rng.normal(0, 0.1));
    s.gap_flag.push_back(0);
  }
  return s;
}

}  // namespace testutil
