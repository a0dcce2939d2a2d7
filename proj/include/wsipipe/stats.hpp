#pragma once

#include <vector>

#include "wsipipe/errors.hpp"

namespace wsipipe {

// Linear-interpolation percentile at rank position (n-1)*q/100 over the
// sorted values; q in [0, 100].
double percentile_linear(std::vector<double> values, double q);

// Median: mean of the two middle values for even counts.
double median(std::vector<double> values);

double gammaln(double x);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_sf(double x, int df);

double normal_cdf(double z);

struct ChiSquareResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Pearson chi-square on an r x c contingency table of observed counts,
// without continuity correction.
ChiSquareResult chi_square_test(const std::vector<std::vector<double>>& observed);

struct MannWhitneyResult {
  double u = 0.0;  // U statistic for the first sample, ties counted 1/2
  double p_value = 1.0;
  bool exact = false;
};

// Two-sided Mann-Whitney U. Exact enumeration over all group assignments
// when both samples have at most `exact_limit` observations, otherwise the
// normal approximation with tie correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b,
                                 int exact_limit = 8);

}  // namespace wsipipe
