#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wsipipe/metrics.hpp"
#include "wsipipe/rng.hpp"

using namespace wsipipe;

TEST_CASE("auc hand examples") {
  CHECK(auc({0.1, 0.9}, {0, 1}) == 1.0);
  CHECK(auc({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK(auc({0.7, 0.4, 0.8, 0.6}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), UndefinedMetric);
}

TEST_CASE("roc curve runs from (0,0) to (1,1) with decreasing thresholds") {
  const RocCurve c = roc_curve({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  REQUIRE(c.points.size() >= 2);
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].threshold < c.points[i - 1].threshold);
    CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
    CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
  }
}

TEST_CASE("trapezoid area equals the Mann-Whitney AUC on random data") {
  Rng rng(61);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(48));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // Quantized scores make ties common.
      scores[i] = std::floor(rng.uniform() * 10.0) / 10.0;
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    const double area = roc_trapezoid_area(roc_curve(scores, labels));
    CHECK(area == doctest::Approx(auc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("sensitivity at specificity: the worked example") {
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    scores.push_back(0.05 + 0.1 * i);
    labels.push_back(0);
  }
  for (double s : {0.55, 0.65, 0.85, 0.95}) {
    scores.push_back(s);
    labels.push_back(1);
  }
  const OperatingPoint op = sensitivity_at_specificity(scores, labels, 0.90);
  CHECK(op.sensitivity == doctest::Approx(0.25));
  CHECK(op.threshold == doctest::Approx(0.85));
  CHECK(op.specificity == doctest::Approx(0.90));
}

TEST_CASE("sensitivity at specificity matches the exhaustive oracle") {
  Rng rng(67);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(46));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      scores[i] = std::floor(rng.uniform() * 20.0) / 20.0;
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      pos += labels[i];
    }
    if (pos == 0 || pos == n) continue;
    const double target = rng.uniform(0.0, 1.0);
    const auto want = oracle::sens_at_spec(scores, labels, target);
    REQUIRE(want.has_value());
    const OperatingPoint got = sensitivity_at_specificity(scores, labels, target);
    CHECK(got.sensitivity == doctest::Approx(want->sensitivity).epsilon(1e-12));
    CHECK(got.threshold == doctest::Approx(want->threshold).epsilon(1e-12));
    CHECK(got.specificity == doctest::Approx(want->specificity).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap CI is deterministic and ordered") {
  Rng rng(71);
  std::vector<double> scores(60);
  std::vector<int> labels(60);
  for (int i = 0; i < 60; ++i) {
    labels[i] = i < 30 ? 1 : 0;
    scores[i] = rng.uniform() + (labels[i] ? 0.3 : 0.0);
  }
  const CiEstimate a = bootstrap_auc_ci(scores, labels, 400, 9);
  const CiEstimate b = bootstrap_auc_ci(scores, labels, 400, 9);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK(a.lower <= a.point);
  CHECK(a.point <= a.upper);
  CHECK(a.point == doctest::Approx(auc(scores, labels)));
  // Resample r draws from Rng(seed + r), so nearby seeds share most draws;
  // pick a disjoint seed to probe sensitivity.
  const CiEstimate c = bootstrap_auc_ci(scores, labels, 400, 100000);
  CHECK((c.lower != a.lower || c.upper != a.upper));
}

TEST_CASE("bootstrap gives up on degenerate data") {
  // Undefined on the observed data itself: no point estimate exists.
  const auto never = [](const std::vector<std::size_t>&) {
    return std::optional<double>();
  };
  CHECK_THROWS_AS(bootstrap_ci(10, never, 50, 1), UndefinedMetric);
  // Defined on the observed data but on (almost) no resample: the redraw
  // budget of 10 * n_boot attempts runs out.
  const auto distinct_only = [](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> sorted(idx);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (sorted[i] != i) return std::optional<double>();
    return std::optional<double>(1.0);
  };
  CHECK_THROWS_AS(bootstrap_ci(10, distinct_only, 50, 1), DegenerateBootstrap);
}

TEST_CASE("stratified sensitivity table marks empty ISUP groups N/A") {
  std::vector<double> scores;
  std::vector<int> labels, isup;
  Rng rng(73);
  for (int i = 0; i < 40; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(0);
    isup.push_back(0);
  }
  for (int i = 0; i < 12; ++i) {
    scores.push_back(rng.uniform() + 0.4);
    labels.push_back(1);
    isup.push_back(i % 2 == 0 ? 2 : 5);  // only ISUP 2 and 5 present
  }
  const StratumTable table = sensitivity_by_stratum(scores, labels, isup);
  REQUIRE(table.targets.size() == 4);
  CHECK(table.targets[0] == 0.99);
  REQUIRE(table.strata.size() == 5);
  REQUIRE(table.cells.size() == 4);
  for (const auto& row : table.cells) {
    REQUIRE(row.size() == 5);
    CHECK_FALSE(row[0].has_value());  // ISUP 1 empty
    CHECK(row[1].has_value());        // ISUP 2 populated
    CHECK_FALSE(row[2].has_value());
    CHECK_FALSE(row[3].has_value());
    CHECK(row[4].has_value());
  }
  // Thresholds are shared across strata per specificity target.
  for (std::size_t r = 0; r < table.targets.size(); ++r) {
    const OperatingPoint op =
        sensitivity_at_specificity(scores, labels, table.targets[r]);
    CHECK(table.thresholds[r] == doctest::Approx(op.threshold));
  }
}

TEST_CASE("logistic gradient matches finite differences") {
  Rng rng(79);
  std::vector<std::vector<double>> covs;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    covs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  LogisticModel m;
  m.weights = {0.2, -0.4, 0.1, 0.05};  // three covariates plus intercept
  const auto grad = logistic_gradient(m, covs, labels);
  REQUIRE(grad.size() == 4);
  const double eps = 1e-6;
  for (std::size_t j = 0; j < 4; ++j) {
    LogisticModel plus = m, minus = m;
    plus.weights[j] += eps;
    minus.weights[j] -= eps;
    const double fd = (logistic_nll(plus, covs, labels) -
                       logistic_nll(minus, covs, labels)) /
                      (2.0 * eps);
    CHECK(std::fabs(fd - grad[j]) < 1e-5);
  }
}

TEST_CASE("intercept-only logistic fit recovers the prevalence") {
  std::vector<std::vector<double>> covs(20);  // no covariates
  std::vector<int> labels(20, 0);
  for (int i = 0; i < 7; ++i) labels[i] = 1;
  const LogisticModel m = fit_logistic_baseline(covs, labels);
  CHECK(m.converged);
  CHECK(m.predict({}) == doctest::Approx(0.35).epsilon(1e-6));
}

TEST_CASE("logistic baseline separates a separable toy problem") {
  std::vector<std::vector<double>> covs;
  std::vector<int> labels;
  Rng rng(83);
  for (int i = 0; i < 40; ++i) {
    const int y = i % 2;
    covs.push_back({rng.uniform(0.0, 1.0) + (y ? 0.4 : 0.0)});
    labels.push_back(y);
  }
  const LogisticModel m = fit_logistic_baseline(covs, labels);
  std::vector<double> scores;
  for (const auto& c : covs) scores.push_back(m.predict(c));
  CHECK(auc(scores, labels) > 0.7);
}
