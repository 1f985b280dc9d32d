#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "unnas/analysis/stats.hpp"
#include "oracles.hpp"
#include "unnas/error.hpp"

using namespace unnas;
using namespace unnas::analysis;

using oracle::brute_force_curve;
using oracle::brute_force_rho;
using oracle::make_pool;
using oracle::sum_d2_rho;

TEST(Spearman, SmallExamples) {
  const std::vector<double> x{1, 2, 3, 4}, up{10, 20, 30, 40}, down{4, 3, 2, 1}, y{2, 1, 4, 3};
  EXPECT_DOUBLE_EQ(spearman_rho(x, up).rho, 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(x, down).rho, -1.0);
  EXPECT_NEAR(spearman_rho(x, y).rho, 0.6, 1e-15);
  EXPECT_EQ(spearman_rho(x, y).n, 4u);
}

TEST(Spearman, MatchesSumD2OnTieFreeData) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 2 + uniform_below(rng, 60);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = uniform01(rng), y[i] = uniform01(rng);
    EXPECT_NEAR(spearman_rho(x, y).rho, sum_d2_rho(x, y), 1e-12);
  }
}

TEST(Spearman, MatchesBruteForceOnTiedData) {
  Rng rng(2);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 3 + uniform_below(rng, 30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = double(uniform_below(rng, 4)), y[i] = double(uniform_below(rng, 5));
    const auto rep = spearman_rho(x, y);
    if (rep.degenerate) continue;
    EXPECT_NEAR(rep.rho, brute_force_rho(x, y), 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 450);
}

TEST(Spearman, AverageRanks) {
  const std::vector<double> v{3, 1, 3, 2, 3};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{4, 1, 4, 2, 4}));
}

TEST(Spearman, ExactlyInvariantUnderIncreasingMaps) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 2 + uniform_below(rng, 40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = uniform_real(rng, -3, 3), y[i] = uniform_real(rng, -3, 3);
    const double base = spearman_rho(x, y).rho;
    for (auto f : {+[](double v) { return std::exp(v); }, +[](double v) { return 2 * v + 3; },
                   +[](double v) { return v * v * v; }}) {
      std::vector<double> fx(n), fy(n);
      std::transform(x.begin(), x.end(), fx.begin(), f);
      std::transform(y.begin(), y.end(), fy.begin(), f);
      EXPECT_EQ(spearman_rho(fx, y).rho, base);
      EXPECT_EQ(spearman_rho(x, fy).rho, base);
    }
    EXPECT_EQ(spearman_rho(y, x).rho, base);
  }
}

TEST(Spearman, DegenerateAndErrors) {
  const std::vector<double> c{1, 1, 1}, x{1, 2, 3};
  const auto rep = spearman_rho(c, x);
  EXPECT_TRUE(rep.degenerate);
  EXPECT_TRUE(std::isnan(rep.rho));
  EXPECT_THROW(spearman_rho(std::vector<double>{1}, std::vector<double>{1}), ContractViolation);
  EXPECT_THROW(spearman_rho(x, std::vector<double>{1, 2}), ContractViolation);
  EXPECT_THROW(spearman_rho(x, std::vector<double>{1, NAN, 2}), ContractViolation);
}

TEST(Efficiency, MatchesBruteForceOnTenPools) {
  const std::vector<int> sizes{1, 2, 3, 5, 10};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng pool_rng(seed);
    const auto pool = make_pool(10, pool_rng, seed % 2 ? 3 : 1000);
    Rng a(seed + 100), b(seed + 100);
    const auto got = efficiency_curve(pool, "rot", "supv_cls", sizes, a);
    const auto want = brute_force_curve(pool, sizes, b);
    ASSERT_EQ(got.points.size(), want.points.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      EXPECT_EQ(got.points[k].repeats, want.points[k].repeats);
      EXPECT_EQ(got.points[k].mean, want.points[k].mean) << "seed " << seed << " m " << sizes[k];
      EXPECT_EQ(got.points[k].std, want.points[k].std);
      EXPECT_EQ(got.points[k].band, want.points[k].band);
    }
    EXPECT_EQ(a(), b());   // both consumed the same number of draws
  }
}

TEST(Efficiency, FullSizeIsGlobalArgmax) {
  Rng rng(4);
  const auto pool = make_pool(12, rng, 3);
  const auto best = *std::min_element(pool.begin(), pool.end(), [](const ArchRecord& a, const ArchRecord& b) {
    const double pa = a.accuracies.at("rot"), pb = b.accuracies.at("rot");
    return pa != pb ? pa > pb : a.arch_id < b.arch_id;
  });
  const auto curve = efficiency_curve(pool, "rot", "supv_cls", {12}, rng);
  EXPECT_EQ(curve.points[0].repeats, 1);
  EXPECT_EQ(curve.points[0].mean, best.accuracies.at("supv_cls"));
  EXPECT_EQ(curve.points[0].band, 0.0);
}

TEST(Efficiency, SingleDrawsAverageThePool) {
  Rng rng(5);
  const auto pool = make_pool(400, rng, 1000);
  double mean = 0, var = 0;
  for (const auto& r : pool) mean += r.accuracies.at("supv_cls");
  mean /= 400;
  for (const auto& r : pool) var += std::pow(r.accuracies.at("supv_cls") - mean, 2);
  const double sd = std::sqrt(var / 400);
  const auto curve = efficiency_curve(pool, "rot", "supv_cls", {1}, rng);
  EXPECT_EQ(curve.points[0].repeats, 400);
  EXPECT_NEAR(curve.points[0].mean, mean, 4 * sd / std::sqrt(400.0));
}

TEST(Efficiency, RepeatCountsAndDeterminism) {
  Rng rng(6);
  const auto pool = make_pool(23, rng, 5);
  std::vector<int> sizes;
  for (int m = 1; m <= 23; ++m) sizes.push_back(m);
  Rng a(1), b(1);
  const auto x = efficiency_curve(pool, "rot", "supv_cls", sizes, a);
  const auto y = efficiency_curve(pool, "rot", "supv_cls", sizes, b);
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    EXPECT_EQ(x.points[k].repeats, (23 + sizes[k] - 1) / sizes[k]);
    EXPECT_EQ(x.points[k].mean, y.points[k].mean);
    EXPECT_GE(x.points[k].band, 0.0);
  }
}

TEST(Efficiency, Errors) {
  Rng rng(7);
  auto pool = make_pool(5, rng, 3);
  EXPECT_THROW(efficiency_curve(pool, "rot", "supv_cls", {6}, rng), ContractViolation);
  EXPECT_THROW(efficiency_curve(pool, "rot", "supv_cls", {0}, rng), ContractViolation);
  pool[2].accuracies.erase("supv_cls");
  EXPECT_THROW(efficiency_curve(pool, "rot", "supv_cls", {2}, rng), ContractViolation);
}

TEST(Huber, ExactLine) {
  const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
  for (double delta : {0.1, 1.345, 100.0}) {
    const auto f = huber_fit(x, y, delta);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  }
}

TEST(Huber, HugeDeltaIsLeastSquares) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 3 + uniform_below(rng, 40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform_real(rng, -5, 5);
      y[i] = 0.7 * x[i] + 2 + standard_normal(rng) + (uniform_below(rng, 10) == 0 ? 30 : 0);
    }
    const auto f = huber_fit(x, y, 1e9);
    const auto [a, b] = ols_fit(x, y);
    EXPECT_NEAR(f.slope, a, 1e-8);
    EXPECT_NEAR(f.intercept, b, 1e-8);
  }
}

TEST(Huber, OutlierPullsLessThanLeastSquares) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) x.push_back(i * 0.5), y.push_back(i * 0.5);
  x.push_back(10);
  y.push_back(100);
  const auto f = huber_fit(x, y, 1.0);
  const auto [a, b] = ols_fit(x, y);
  EXPECT_LT(std::abs(f.slope - 1), std::abs(a - 1));
}

TEST(Huber, IrlsObjectiveNeverIncreases) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 5 + uniform_below(rng, 50);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform_real(rng, 0, 1);
      y[i] = -1.5 * x[i] + 0.2 * standard_normal(rng) + (uniform_below(rng, 5) == 0 ? uniform_real(rng, -20, 20) : 0);
    }
    const auto f = huber_fit(x, y, 1.345);
    ASSERT_GE(f.objective.size(), 2u);
    EXPECT_LE(f.iterations, 100);
    for (std::size_t k = 1; k < f.objective.size(); ++k) {
      EXPECT_LE(f.objective[k], f.objective[k - 1] * (1 + 1e-12)) << "trial " << trial << " iter " << k;
    }
  }
}

TEST(Huber, RankDeficientDesign) {
  const std::vector<double> x{2, 2, 2}, y{1, 2, 3};
  EXPECT_THROW(huber_fit(x, y), ContractViolation);
  EXPECT_THROW(huber_fit(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 0.0), ContractViolation);
}
