#include <gtest/gtest.h>

#include "fluxtft/gapfill.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fluxtft;

TEST(ImputeCells, MatchesBruteForceOracle) {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng.below(180), m = 1 + rng.below(5);
    const auto s = oracle::random_site(rng, n, m, 0.2, 0.0);
    const auto got = impute_within_records(s, ImputeConfig{5});
    const auto want = oracle::impute_cells(s, 5);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(got.features[j][i], want.features[j][i]) << "trial " << trial;
    }
  }
}

TEST(ImputeCells, TargetsAndObservedCellsUntouched) {
  Rng rng(5);
  auto s = oracle::random_site(rng, 60, 3, 0.3, 0.0);
  s.target[4] = std::nan("");
  const auto got = impute_within_records(s, ImputeConfig{3});
  EXPECT_TRUE(std::isnan(got.target[4]));
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < 60; ++i) {
      if (!std::isnan(s.features[j][i])) {
        EXPECT_EQ(got.features[j][i], s.features[j][i]);
      }
      EXPECT_FALSE(std::isnan(got.features[j][i]));
    }
  }
}

TEST(ImputeCells, HandComputedNeighbors) {
  SiteSeries s;
  s.site_id = "X";
  s.features = {{0.0, 1.0, 10.0, 0.5}, {std::nan(""), 2.0, 100.0, 4.0}};
  s.timestamps = {0, 1, 2, 3};
  s.target = {0, 0, 0, 0};
  s.gap_flag = {0, 0, 0, 0};
  // Row 0 only shares feature 0; nearest two by |x0 - x| are rows 3 (0.5) and 1 (1.0).
  const auto got = impute_within_records(s, ImputeConfig{2});
  EXPECT_DOUBLE_EQ(got.features[1][0], 3.0);
}

TEST(ImputeCells, AllMissingFeatureIsDataError) {
  auto s = testutil::tiny_site("A", 10, 1);
  for (auto& v : s.features[1]) v = std::nan("");
  EXPECT_THROW(impute_within_records(s, testutil::tiny_catalog(), ImputeConfig{}), DataError);
}

TEST(ImputeRecords, MatchesBruteForceOracle) {
  Rng rng(202);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.below(190), m = 1 + rng.below(4);
    const auto s = oracle::random_site(rng, n, m, 0.0, 0.15);
    const auto got = impute_sequence_gaps(s, ImputeConfig{5});
    const auto want = oracle::impute_records(s, 5);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got.timestamps[i], want.timestamps[i]);
      ASSERT_EQ(got.gap_flag[i], want.gap_flag[i]);
      ASSERT_EQ(got.target[i], want.target[i]);
      for (std::size_t j = 0; j < m; ++j) ASSERT_EQ(got.features[j][i], want.features[j][i]);
    }
  }
}

TEST(ImputeRecords, ContiguousGridAndFlags) {
  Rng rng(9);
  const auto s = oracle::random_site(rng, 120, 2, 0.0, 0.2);
  const auto got = impute_sequence_gaps(s, ImputeConfig{5});
  EXPECT_TRUE(got.contiguous());
  EXPECT_EQ(static_cast<Timestamp>(got.size()), s.span_hours());
  std::size_t flagged = 0;
  for (auto g : got.gap_flag) flagged += g;
  EXPECT_EQ(flagged, got.size() - s.size());
}

TEST(ImputeRecords, ContiguousInputUnchanged) {
  const auto s = testutil::tiny_site("A", 50, 2);
  const auto got = impute_sequence_gaps(s);
  EXPECT_TRUE(same_sites({s}, {got}));
}

TEST(ImputeConfig, RejectsOtherMetrics) {
  EXPECT_THROW(ImputeConfig::from_json({{"metric", "manhattan"}}), UsageError);
  EXPECT_THROW(ImputeConfig::from_json({{"weighting", "distance"}}), UsageError);
  EXPECT_THROW(ImputeConfig::from_json({{"k_neighbors", 0}}), UsageError);
  EXPECT_EQ(ImputeConfig::from_json({{"k_neighbors", 7}}).k_neighbors, 7);
}
