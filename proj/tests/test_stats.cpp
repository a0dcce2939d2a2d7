#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsipipe/rng.hpp"
#include "wsipipe/stats.hpp"

using namespace wsipipe;

TEST_CASE("percentile_linear matches hand examples") {
  CHECK(percentile_linear({1, 2, 3, 4}, 75.0) == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(percentile_linear({5}, 10.0) == 5.0);
  CHECK(percentile_linear({3, 1, 2}, 0.0) == 1.0);
  CHECK(percentile_linear({3, 1, 2}, 100.0) == 3.0);
  CHECK(percentile_linear({3, 1, 2}, 50.0) == 2.0);
  CHECK_THROWS_AS(percentile_linear({}, 50.0), InvalidInput);
  CHECK_THROWS_AS(percentile_linear({1.0}, -1.0), InvalidInput);
}

TEST_CASE("percentile and median match the brute-force oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(50));
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    const double q = rng.uniform(0.0, 100.0);
    CHECK(percentile_linear(v, q) == doctest::Approx(oracle::percentile(v, q)).epsilon(1e-12));
    CHECK(median(v) == doctest::Approx(oracle::median(v)).epsilon(1e-12));
  }
}

TEST_CASE("chi-square survival function against closed forms") {
  CHECK(chi_square_sf(3.0, 2) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));
  CHECK(chi_square_sf(1.0, 1) == doctest::Approx(std::erfc(std::sqrt(0.5))).epsilon(1e-12));
  CHECK(chi_square_sf(0.0, 3) == 1.0);
  CHECK(gamma_p(2.5, 1.3) + gamma_q(2.5, 1.3) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("normal cdf basics") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(normal_cdf(-3.0) + normal_cdf(3.0) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("chi-square test matches the oracle on random tables") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const int r = 2 + static_cast<int>(rng.below(3));
    const int c = 2 + static_cast<int>(rng.below(3));
    std::vector<std::vector<double>> table(r, std::vector<double>(c));
    bool ok = true;
    for (auto& row : table)
      for (double& cell : row) cell = static_cast<double>(rng.below(30));
    // Every row and column must have mass for the table to be testable.
    for (int i = 0; i < r; ++i) {
      double s = 0;
      for (int j = 0; j < c; ++j) s += table[i][j];
      if (s == 0) ok = false;
    }
    if (!ok) continue;
    const ChiSquareResult got = chi_square_test(table);
    const oracle::ChiSquare want = oracle::chi_square(table);
    CHECK(got.statistic == doctest::Approx(want.statistic).epsilon(1e-12));
    CHECK(got.df == want.df);
    CHECK(got.p_value == doctest::Approx(want.p_value).epsilon(1e-12));
  }
}

TEST_CASE("Mann-Whitney exact: the two-vs-two example") {
  const MannWhitneyResult r = mann_whitney_u({1, 2}, {3, 4});
  CHECK(r.exact);
  CHECK(r.u == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("Mann-Whitney exact matches full enumeration with ties") {
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const int na = 1 + static_cast<int>(rng.below(6));
    const int nb = 1 + static_cast<int>(rng.below(6));
    std::vector<double> a(na), b(nb);
    for (double& x : a) x = static_cast<double>(rng.below(5));
    for (double& x : b) x = static_cast<double>(rng.below(5));
    const MannWhitneyResult got = mann_whitney_u(a, b);
    const oracle::MannWhitney want = oracle::mann_whitney_exact(a, b);
    CHECK(got.exact);
    CHECK(got.u == doctest::Approx(want.u).epsilon(1e-12));
    CHECK(got.p_value == doctest::Approx(want.p_value).epsilon(1e-12));
  }
}

TEST_CASE("Mann-Whitney falls back to the normal approximation") {
  std::vector<double> a(12), b(9);
  Rng rng(5);
  for (double& x : a) x = rng.uniform();
  for (double& x : b) x = rng.uniform() + 0.3;
  const MannWhitneyResult r = mann_whitney_u(a, b);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
  // All-tied samples carry no evidence.
  CHECK(mann_whitney_u(std::vector<double>(10, 1.0), std::vector<double>(10, 1.0)).p_value == 1.0);
}
