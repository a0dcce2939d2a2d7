#include "wsipipe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace wsipipe {

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("percentile: empty list");
  if (q < 0.0 || q > 100.0) throw InvalidInput("percentile: q outside [0,100]");
  std::sort(values.begin(), values.end());
  const double pos = (values.size() - 1) * q / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - lo;
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("median: empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double gammaln(double x) {
  // Lanczos approximation, g = 5, n = 6.
  static const double cof[6] = {76.18009172947146,     -86.50532032941677,
                                24.01409824083091,     -1.231739572450155,
                                0.1208650973866179e-2, -0.5395239384953e-5};
  double y = x;
  double tmp = x + 5.5;
  tmp -= (x + 0.5) * std::log(tmp);
  double ser = 1.000000000190015;
  for (int j = 0; j < 6; ++j) ser += cof[j] / ++y;
  return -tmp + std::log(2.5066282746310005 * ser / x);
}

namespace {

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ++ap;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - gammaln(a));
}

double gamma_q_contfrac(double a, double x) {
  const double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gammaln(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw InvalidInput("gamma_p: invalid arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw InvalidInput("gamma_q: invalid arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_contfrac(a, x);
}

double chi_square_sf(double x, int df) {
  if (df <= 0) throw InvalidInput("chi_square_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(df / 2.0, x / 2.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

ChiSquareResult chi_square_test(const std::vector<std::vector<double>>& observed) {
  const std::size_t r = observed.size();
  if (r < 2) throw InvalidInput("chi_square_test: need at least 2 rows");
  const std::size_t c = observed[0].size();
  if (c < 2) throw InvalidInput("chi_square_test: need at least 2 columns");
  std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (observed[i].size() != c)
      throw InvalidInput("chi_square_test: ragged table");
    for (std::size_t j = 0; j < c; ++j) {
      row_sum[i] += observed[i][j];
      col_sum[j] += observed[i][j];
      total += observed[i][j];
    }
  }
  if (total <= 0.0) throw InvalidInput("chi_square_test: empty table");
  ChiSquareResult result;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row_sum[i] * col_sum[j] / total;
      if (expected > 0.0) {
        const double d = observed[i][j] - expected;
        result.statistic += d * d / expected;
      }
    }
  result.df = static_cast<int>((r - 1) * (c - 1));
  result.p_value = chi_square_sf(result.statistic, result.df);
  return result;
}

namespace {

// Twice the U statistic of the values at `pick` against the rest; integer so
// exact-test comparisons avoid floating point.
std::int64_t u2_statistic(const std::vector<double>& pooled, std::uint32_t pick,
                          int n) {
  std::int64_t u2 = 0;
  for (int i = 0; i < n; ++i) {
    if (!(pick >> i & 1)) continue;
    for (int j = 0; j < n; ++j) {
      if (pick >> j & 1) continue;
      if (pooled[i] > pooled[j])
        u2 += 2;
      else if (pooled[i] == pooled[j])
        u2 += 1;
    }
  }
  return u2;
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b, int exact_limit) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 == 0 || n2 == 0)
    throw InvalidInput("mann_whitney_u: group with zero members");

  MannWhitneyResult result;
  double u = 0.0;
  for (double x : a)
    for (double y : b) {
      if (x > y)
        u += 1.0;
      else if (x == y)
        u += 0.5;
    }
  result.u = u;

  if (static_cast<int>(n1) <= exact_limit && static_cast<int>(n2) <= exact_limit) {
    result.exact = true;
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const int n = static_cast<int>(n1 + n2);
    const std::int64_t mean2 = static_cast<std::int64_t>(n1) * n2;  // 2 * n1 n2 / 2
    const std::int64_t dev_obs = std::llabs(static_cast<std::int64_t>(
                                                std::llround(2.0 * u)) -
                                            mean2);
    std::uint64_t extreme = 0, count = 0;
    // Gosper's hack over all n1-subsets of the pooled sample.
    std::uint32_t pick = (1u << n1) - 1;
    const std::uint32_t end = 1u << n;
    while (pick < end) {
      ++count;
      if (std::llabs(u2_statistic(pooled, pick, n) - mean2) >= dev_obs) ++extreme;
      const std::uint32_t c = pick & -pick;
      const std::uint32_t r = pick + c;
      pick = (((r ^ pick) >> 2) / c) | r;
      if (c == 0) break;
    }
    result.p_value = static_cast<double>(extreme) / static_cast<double>(count);
    return result;
  }

  // Normal approximation with tie correction.
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  const double n = static_cast<double>(n1 + n2);
  double tie_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_sum += t * t * t - t;
    i = j;
  }
  const double mu = static_cast<double>(n1) * n2 / 2.0;
  const double sigma2 = static_cast<double>(n1) * n2 / 12.0 *
                        ((n + 1.0) - tie_sum / (n * (n - 1.0)));
  if (sigma2 <= 0.0) {
    result.p_value = 1.0;  // all observations tied
    return result;
  }
  const double z = (u - mu) / std::sqrt(sigma2);
  result.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::fabs(z))));
  return result;
}

}  // namespace wsipipe
