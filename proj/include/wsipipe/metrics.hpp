#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wsipipe/errors.hpp"

namespace wsipipe {

// Probability that a random positive outscores a random negative, ties
// counted 1/2 (Mann-Whitney formulation).
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold decreasing, (0,0) -> (1,1)
  int n_pos = 0;
  int n_neg = 0;
};

// Stepwise curve over the unique score thresholds; predicted-positive means
// score strictly greater than the threshold.
RocCurve roc_curve(const std::vector<double>& scores,
                   const std::vector<int>& labels);

double roc_trapezoid_area(const RocCurve& curve);

struct CiEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int n_boot = 2000;
  std::uint64_t seed = 0;
};

// Percentile bootstrap over analysis units 0..n_units-1. The statistic gets
// a resample's unit indices and returns nullopt when undefined (for example
// a single-class AUC resample); undefined resamples are redrawn with a cap
// of 10*n_boot attempts. Resample r uses Rng(seed + r) where r counts all
// attempts, so results are independent of evaluation order.
CiEstimate bootstrap_ci(std::size_t n_units,
                        const std::function<std::optional<double>(
                            const std::vector<std::size_t>&)>& statistic,
                        int n_boot = 2000, std::uint64_t seed = 0);

// Convenience wrapper resampling (score, label) rows with an AUC statistic.
CiEstimate bootstrap_auc_ci(const std::vector<double>& scores,
                            const std::vector<int>& labels, int n_boot = 2000,
                            std::uint64_t seed = 0);

struct OperatingPoint {
  double sensitivity = 0.0;
  double threshold = 0.0;
  double specificity = 0.0;
};

// Among thresholds achieving specificity >= target, the maximal sensitivity
// and the smallest such threshold.
OperatingPoint sensitivity_at_specificity(const std::vector<double>& scores,
                                          const std::vector<int>& labels,
                                          double target_spec);

struct StratumTable {
  std::vector<double> targets;  // specificity targets, one row each
  std::vector<int> strata;      // ISUP groups, one column each
  // cells[row][col]; empty stratum -> nullopt (rendered N/A)
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<double> thresholds;  // per row, fixed on all negatives
};

// Sensitivity within each ISUP group of positives at thresholds fixed per
// specificity target from the pooled negatives.
StratumTable sensitivity_by_stratum(
    const std::vector<double>& scores, const std::vector<int>& labels,
    const std::vector<int>& isup,
    const std::vector<double>& targets = {0.99, 0.98, 0.95, 0.90});

struct LogisticModel {
  std::vector<double> weights;  // one per covariate, then intercept last
  bool converged = false;
  int iterations = 0;

  double predict(const std::vector<double>& covariates) const;
};

// Maximum-likelihood logistic regression on the covariate vectors plus an
// intercept; full-batch gradient descent with line-halving until the
// gradient norm drops below 1e-8 or 10,000 iterations.
LogisticModel fit_logistic_baseline(
    const std::vector<std::vector<double>>& covariates,
    const std::vector<int>& labels);

// Mean negative log-likelihood and its gradient, exposed for testing.
double logistic_nll(const LogisticModel& m,
                    const std::vector<std::vector<double>>& covariates,
                    const std::vector<int>& labels);
std::vector<double> logistic_gradient(
    const LogisticModel& m, const std::vector<std::vector<double>>& covariates,
    const std::vector<int>& labels);

}  // namespace wsipipe
