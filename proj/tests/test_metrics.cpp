#include <gtest/gtest.h>

#include <cmath>

#include "fluxtft/core/rng.hpp"
#include "fluxtft/metrics.hpp"

using namespace fluxtft;

namespace {

std::vector<double> randvec(Rng& rng, std::size_t n, double mu, double sd) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mu, sd);
  return v;
}

}  // namespace

TEST(Metrics, IdentitiesOnRandomVectors) {
  Rng rng(100);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(300);
    const auto y = randvec(rng, n, rng.normal(0, 5), 0.1 + rng.uniform(0, 4));
    auto yhat = y;
    for (auto& v : yhat) v += rng.normal(0, rng.uniform(0.01, 3));
    const auto r = compute_metrics(y, yhat);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    ASSERT_TRUE(r.nse.has_value());
    EXPECT_NEAR(*r.nse, 1.0 - r.rmse * r.rmse / var, 1e-9 * (1.0 + std::abs(*r.nse)));
    EXPECT_LE(r.mae, r.rmse * (1 + 1e-12));
    EXPECT_LE(r.rmse, std::sqrt(static_cast<double>(n)) * r.mae * (1 + 1e-12));
    EXPECT_LE(*r.nse, 1.0);

    const auto perfect = compute_metrics(y, y);
    EXPECT_EQ(perfect.rmse, 0.0);
    EXPECT_EQ(*perfect.nse, 1.0);
    const auto climatology = compute_metrics(y, std::vector<double>(n, mean));
    EXPECT_NEAR(*climatology.nse, 0.0, 1e-9);

    // affine change of units: NSE invariant, RMSE and MAE scale with |a|
    const double a = rng.uniform(-3, 3) + 0.1, b = rng.normal(0, 10);
    std::vector<double> ya(n), yha(n);
    for (std::size_t i = 0; i < n; ++i) {
      ya[i] = a * y[i] + b;
      yha[i] = a * yhat[i] + b;
    }
    const auto s = compute_metrics(ya, yha);
    EXPECT_NEAR(*s.nse, *r.nse, 1e-8 * (1.0 + std::abs(*r.nse)));
    EXPECT_NEAR(s.rmse, std::abs(a) * r.rmse, 1e-9 * (1.0 + s.rmse));
    EXPECT_NEAR(s.mae, std::abs(a) * r.mae, 1e-9 * (1.0 + s.mae));
  }
}

TEST(Metrics, HandValues) {
  const std::vector<double> y = {1, 2, 3, 4}, yhat = {1, 2, 3, 6};
  const auto r = compute_metrics(y, yhat);
  EXPECT_DOUBLE_EQ(r.rmse, 1.0);
  EXPECT_DOUBLE_EQ(r.mae, 0.5);
  EXPECT_DOUBLE_EQ(*r.nse, 1.0 - 4.0 / 5.0);
}

TEST(Metrics, UndefinedNseAndErrors) {
  const std::vector<double> c = {2, 2, 2};
  EXPECT_FALSE(compute_metrics(c, std::vector<double>{1, 2, 3}).nse.has_value());
  EXPECT_TRUE(compute_metrics(c, c).to_json()["nse"].is_null());
  EXPECT_THROW(compute_metrics(c, std::vector<double>{1, 2}), UsageError);
  EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), UsageError);
  EXPECT_THROW(compute_metrics(std::vector<double>{1, NAN}, std::vector<double>{1, 2}), DataError);
}

TEST(Breakdown, GroupSsePartitionsPooledSse) {
  Rng rng(4);
  const std::size_t n = 500;
  const auto y = randvec(rng, n, 3, 2);
  auto yhat = y;
  std::vector<std::string> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = std::string(1, static_cast<char>('A' + rng.below(4)));
    yhat[i] += rng.normal(0, 0.2 + (g[i][0] - 'A'));
  }
  const auto b = breakdown_by_group(y, yhat, g);
  ASSERT_EQ(b.groups.size(), 4u);
  double sse = 0.0;
  std::size_t count = 0;
  for (const auto& r : b.groups) {
    sse += r.sse;
    count += r.n;
  }
  EXPECT_NEAR(sse, b.overall.sse, 1e-9 * b.overall.sse);
  EXPECT_EQ(count, n);
  for (std::size_t i = 1; i < b.groups.size(); ++i) EXPECT_GE(*b.groups[i - 1].nse, *b.groups[i].nse);
  EXPECT_EQ(b.groups.front().label, "A");  // smallest noise
}

TEST(Breakdown, UndefinedGroupsSortLast) {
  const std::vector<double> y = {1, 1, 1, 2, 3}, yhat = {1, 1, 2, 2, 2};
  const auto b = breakdown_by_group(y, yhat, {"Z", "Z", "Z", "B", "B"});
  EXPECT_EQ(b.groups.front().label, "B");
  EXPECT_FALSE(b.groups.back().nse.has_value());
}

TEST(LossDistribution, QuantilesAndSharedBins) {
  const std::vector<double> y = {0, 0, 0, 0, 0}, yhat = {0, 1, 2, 3, 4};
  const auto d = loss_distribution(y, yhat, {"a", "a", "a", "a", "b"}, 4);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[0].quantiles[2], 1.5);  // median of {0,1,2,3}
  EXPECT_DOUBLE_EQ(d[0].bin_width, 1.0);
  EXPECT_EQ(d[0].histogram, (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_EQ(d[1].histogram, (std::vector<std::size_t>{0, 0, 0, 1}));
  EXPECT_DOUBLE_EQ(sorted_quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
}

TEST(MetricsTable, AlignedColumns) {
  MetricReport r = compute_metrics(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4});
  r.label = "GPP-TFT";
  const auto t = metrics_table({r});
  EXPECT_NE(t.find("GPP-TFT"), std::string::npos);
  EXPECT_NE(t.find("0.500"), std::string::npos);  // NSE = 1 - 1/2
}
