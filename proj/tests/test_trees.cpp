#include <gtest/gtest.h>

#include <cmath>

#include "fluxtft/metrics.hpp"
#include "fluxtft/trees.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fluxtft;

namespace {

struct Problem {
  Matrix x;
  std::vector<double> y;
  std::vector<std::vector<double>> rows;
};

// Features on a coarse integer grid so that ties and repeated values occur.
Problem random_problem(Rng& rng, std::size_t n, std::size_t p) {
  Problem pr;
  pr.x = Matrix(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(p);
    for (std::size_t j = 0; j < p; ++j) r[j] = pr.x(i, j) = static_cast<double>(rng.below(12));
    pr.y.push_back(std::sin(r[0]) + 0.3 * r[p - 1] + rng.normal(0, 0.5));
    pr.rows.push_back(std::move(r));
  }
  return pr;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e += (a[i] - b[i]) * (a[i] - b[i]);
  return e / static_cast<double>(a.size());
}

TreeConfig single_tree(int depth, int min_leaf) {
  TreeConfig c;
  c.n_trees = 1;
  c.bootstrap = false;
  c.max_features = 1.0;
  c.max_depth = depth;
  c.min_samples_leaf = min_leaf;
  return c;
}

}  // namespace

TEST(TreeOracle, SingleTreeTrainingMseMatchesExhaustiveSearch) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 20 + rng.below(181);
    const std::size_t p = 1 + rng.below(4);
    const auto pr = random_problem(rng, n, p);
    const int depth = trial % 3 == 0 ? -1 : 1 + static_cast<int>(rng.below(5));
    const int leaf = 1 + static_cast<int>(rng.below(6));
    const auto model = fit_forest(pr.x, pr.y, single_tree(depth, leaf));
    const double got = mse(predict_forest(model, pr.x), pr.y);
    oracle::TreeOracle o{pr.rows, pr.y, depth, static_cast<std::size_t>(leaf)};
    EXPECT_NEAR(got, o.mse(), 1e-12 * (1.0 + o.mse())) << "trial " << trial << " n=" << n;
  }
}

TEST(Trees, UnlimitedDepthInterpolatesDistinctRows) {
  Rng rng(3);
  Matrix x(50, 2);
  std::vector<double> y;
  for (std::size_t i = 0; i < 50; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = rng.uniform();
    y.push_back(rng.normal(0, 1));
  }
  const auto m = fit_forest(x, y, single_tree(-1, 1));
  EXPECT_LT(mse(predict_forest(m, x), y), 1e-24);
}

TEST(Trees, ConstantTargetGivesSingleLeaf) {
  Matrix x(10, 1);
  for (std::size_t i = 0; i < 10; ++i) x(i, 0) = static_cast<double>(i);
  const auto m = fit_forest(x, std::vector<double>(10, 4.5), single_tree(-1, 1));
  ASSERT_EQ(m.trees[0].nodes.size(), 1u);
  EXPECT_EQ(m.trees[0].nodes[0].value, 4.5);
  for (const auto& [name, v] : feature_importance(m)) EXPECT_EQ(v, 0.0);
}

TEST(Trees, MinLeafRespected) {
  Rng rng(8);
  const auto pr = random_problem(rng, 150, 3);
  const auto m = fit_forest(pr.x, pr.y, single_tree(-1, 7));
  for (const auto& nd : m.trees[0].nodes) {
    if (nd.leaf()) {
      EXPECT_GE(nd.n, 7);
    }
  }
}

TEST(Forest, ImportanceRanksDrivers) {
  Rng rng(5);
  Matrix x(600, 5);
  std::vector<double> y;
  for (std::size_t i = 0; i < 600; ++i) {
    for (std::size_t j = 0; j < 5; ++j) x(i, j) = rng.uniform();
    y.push_back(4.0 * x(i, 1) + 2.0 * x(i, 3) + rng.normal(0, 0.05));
  }
  TreeConfig c;
  c.n_trees = 30;
  c.min_samples_leaf = 3;
  c.seed = 9;
  const auto m = fit_forest(x, y, c, {"a", "b", "c", "d", "e"});
  const auto imp = feature_importance(m);
  EXPECT_EQ(imp[0].first, "b");
  EXPECT_EQ(imp[1].first, "d");
  double sum = 0.0;
  for (const auto& [n, v] : imp) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(select_top_k(imp, 2), (std::vector<std::string>{"b", "d"}));
  EXPECT_THROW(select_top_k(imp, 6), UsageError);
}

TEST(Forest, InDistributionNse) {
  const auto cat = testutil::tiny_catalog();
  std::vector<SiteSeries> sites = {testutil::tiny_site("A", 3000, 1), testutil::tiny_site("B", 3000, 2)};
  const std::vector<std::string> names = {"SW_IN", "TA", "hour_of_day"};
  auto [x, y] = tabular_dataset(sites, cat, names);
  TreeConfig c;
  c.n_trees = 40;
  c.min_samples_leaf = 5;
  c.max_features = 0.67;
  c.seed = 2;
  const auto m = fit_forest(x, y, c, names);
  const auto heldout = testutil::tiny_site("C", 1000, 3);
  auto [xt, yt] = tabular_dataset({heldout}, cat, names);
  EXPECT_GT(compute_metrics(yt, predict_forest(m, xt)).nse, 0.9);
}

TEST(Boosting, TrainingLossDecreasesWithRounds) {
  Rng rng(12);
  const auto pr = random_problem(rng, 300, 3);
  TreeConfig c = TreeConfig::boosted();
  c.max_depth = 2;
  c.seed = 4;
  double prev = std::numeric_limits<double>::infinity();
  for (int rounds : {1, 5, 20, 80}) {
    c.n_trees = rounds;
    const double e = mse(predict_forest(fit_forest(pr.x, pr.y, c), pr.x), pr.y);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(Boosting, SingleFullRateRoundEqualsMeanPlusTree) {
  Rng rng(13);
  const auto pr = random_problem(rng, 120, 2);
  TreeConfig c = TreeConfig::boosted();
  c.n_trees = 1;
  c.learning_rate = 1.0;
  c.max_depth = 3;
  const auto b = fit_forest(pr.x, pr.y, c);
  const auto t = fit_forest(pr.x, pr.y, single_tree(3, 1));
  const auto pb = predict_forest(b, pr.x), pt = predict_forest(t, pr.x);
  for (std::size_t i = 0; i < pb.size(); ++i) EXPECT_NEAR(pb[i], pt[i], 1e-12);
}

TEST(Forest, DeterministicAndJsonRoundTrip) {
  Rng rng(14);
  const auto pr = random_problem(rng, 200, 3);
  TreeConfig c;
  c.n_trees = 10;
  c.seed = 77;
  const auto a = fit_forest(pr.x, pr.y, c);
  const auto b = fit_forest(pr.x, pr.y, c);
  EXPECT_EQ(a.to_json(), b.to_json());
  const auto back = ForestModel::from_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(predict_forest(back, pr.x), predict_forest(a, pr.x));
  EXPECT_EQ(back.config.to_json(), c.to_json());
  c.seed = 78;
  EXPECT_NE(fit_forest(pr.x, pr.y, c).to_json(), a.to_json());
}

TEST(Forest, InputErrors) {
  Matrix x(3, 1);
  EXPECT_THROW(fit_forest(x, {1, 2}, TreeConfig{}), DataError);
  x(1, 0) = std::nan("");
  EXPECT_THROW(fit_forest(x, {1, 2, 3}, TreeConfig{}), DataError);
  TreeConfig bad;
  bad.max_depth = 0;
  EXPECT_THROW(bad.validate(), UsageError);
  EXPECT_THROW(ForestModel::from_json({{"format", "other"}}), DataError);
  const auto m = fit_forest(Matrix(3, 1), {1, 2, 3}, TreeConfig{});
  EXPECT_THROW(predict_forest(m, Matrix(2, 2)), DataError);
  EXPECT_THROW(TreeConfig::from_json({{"subsample", 0.0}}), UsageError);
}
