#include "wsipipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "wsipipe/rng.hpp"
#include "wsipipe/stats.hpp"

namespace wsipipe {

namespace {

void check_two_classes(const std::vector<double>& scores,
                       const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw InvalidInput("metrics: score/label length mismatch");
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw UndefinedMetric("metrics: both classes must be present");
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_two_classes(scores, labels);
  double wins = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

RocCurve roc_curve(const std::vector<double>& scores,
                   const std::vector<int>& labels) {
  check_two_classes(scores, labels);
  RocCurve curve;
  for (int y : labels) (y ? curve.n_pos : curve.n_neg) += 1;

  std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
  auto rates_at = [&](double t) {
    int fp = 0, tp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] > t) (labels[i] ? tp : fp) += 1;
    return RocPoint{t, static_cast<double>(fp) / curve.n_neg,
                    static_cast<double>(tp) / curve.n_pos};
  };
  for (double t : thresholds) curve.points.push_back(rates_at(t));
  // Everything predicted positive below the smallest score.
  curve.points.push_back(rates_at(*thresholds.rbegin() - 1.0));
  return curve;
}

double roc_trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

CiEstimate bootstrap_ci(std::size_t n_units,
                        const std::function<std::optional<double>(
                            const std::vector<std::size_t>&)>& statistic,
                        int n_boot, std::uint64_t seed) {
  if (n_units == 0) throw InvalidInput("bootstrap_ci: no units");
  if (n_boot < 1) throw InvalidInput("bootstrap_ci: n_boot must be positive");

  std::vector<std::size_t> identity(n_units);
  for (std::size_t i = 0; i < n_units; ++i) identity[i] = i;
  const std::optional<double> point = statistic(identity);
  if (!point)
    throw UndefinedMetric("bootstrap_ci: statistic undefined on the data");

  std::vector<double> draws;
  draws.reserve(n_boot);
  const std::uint64_t max_attempts = 10ull * static_cast<std::uint64_t>(n_boot);
  std::vector<std::size_t> resample(n_units);
  std::uint64_t attempt = 0;
  while (draws.size() < static_cast<std::size_t>(n_boot)) {
    if (attempt >= max_attempts)
      throw DegenerateBootstrap(
          "bootstrap_ci: resample attempt cap exceeded (degenerate data)");
    Rng rng(seed + attempt);
    ++attempt;
    for (std::size_t i = 0; i < n_units; ++i)
      resample[i] = static_cast<std::size_t>(rng.below(n_units));
    if (const std::optional<double> v = statistic(resample)) draws.push_back(*v);
  }

  CiEstimate ci;
  ci.point = *point;
  ci.lower = percentile_linear(draws, 2.5);
  ci.upper = percentile_linear(std::move(draws), 97.5);
  ci.n_boot = n_boot;
  ci.seed = seed;
  return ci;
}

CiEstimate bootstrap_auc_ci(const std::vector<double>& scores,
                            const std::vector<int>& labels, int n_boot,
                            std::uint64_t seed) {
  check_two_classes(scores, labels);
  auto statistic = [&](const std::vector<std::size_t>& idx)
      -> std::optional<double> {
    std::vector<double> s(idx.size());
    std::vector<int> y(idx.size());
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      s[i] = scores[idx[i]];
      y[i] = labels[idx[i]];
      (y[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) return std::nullopt;
    return auc(s, y);
  };
  return bootstrap_ci(scores.size(), statistic, n_boot, seed);
}

OperatingPoint sensitivity_at_specificity(const std::vector<double>& scores,
                                          const std::vector<int>& labels,
                                          double target_spec) {
  check_two_classes(scores, labels);
  if (target_spec <= 0.0 || target_spec > 1.0)
    throw InvalidInput("sensitivity_at_specificity: target outside (0,1]");
  int n_pos = 0, n_neg = 0;
  for (int y : labels) (y ? n_pos : n_neg) += 1;

  std::set<double> thresholds(scores.begin(), scores.end());
  OperatingPoint best;
  bool found = false;
  for (double t : thresholds) {  // ascending
    int tn = 0, tp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] && scores[i] > t) ++tp;
      if (!labels[i] && scores[i] <= t) ++tn;
    }
    const double spec = static_cast<double>(tn) / n_neg;
    if (spec < target_spec) continue;
    const double sens = static_cast<double>(tp) / n_pos;
    if (!found || sens > best.sensitivity) {
      best = {sens, t, spec};
      found = true;
    }
  }
  // The maximum score always achieves specificity 1, so a feasible threshold
  // exists for every valid target.
  return best;
}

StratumTable sensitivity_by_stratum(const std::vector<double>& scores,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& isup,
                                    const std::vector<double>& targets) {
  check_two_classes(scores, labels);
  if (isup.size() != scores.size())
    throw InvalidInput("sensitivity_by_stratum: isup length mismatch");
  StratumTable table;
  table.targets = targets;
  table.strata = {1, 2, 3, 4, 5};
  for (double target : targets) {
    const OperatingPoint op = sensitivity_at_specificity(scores, labels, target);
    table.thresholds.push_back(op.threshold);
    std::vector<std::optional<double>> row;
    for (int g : table.strata) {
      int in_group = 0, detected = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i] || isup[i] != g) continue;
        ++in_group;
        if (scores[i] > op.threshold) ++detected;
      }
      if (in_group == 0)
        row.emplace_back(std::nullopt);
      else
        row.emplace_back(static_cast<double>(detected) / in_group);
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

double LogisticModel::predict(const std::vector<double>& covariates) const {
  if (covariates.size() + 1 != weights.size())
    throw InvalidInput("LogisticModel: covariate dimension mismatch");
  double z = weights.back();  // intercept
  for (std::size_t i = 0; i < covariates.size(); ++i)
    z += weights[i] * covariates[i];
  return sigmoid(z);
}

double logistic_nll(const LogisticModel& m,
                    const std::vector<std::vector<double>>& covariates,
                    const std::vector<int>& labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const double p = std::clamp(m.predict(covariates[i]), 1e-15, 1.0 - 1e-15);
    sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(covariates.size());
}

std::vector<double> logistic_gradient(
    const LogisticModel& m, const std::vector<std::vector<double>>& covariates,
    const std::vector<int>& labels) {
  std::vector<double> grad(m.weights.size(), 0.0);
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const double err = m.predict(covariates[i]) - labels[i];
    for (std::size_t j = 0; j < covariates[i].size(); ++j)
      grad[j] += err * covariates[i][j];
    grad.back() += err;
  }
  for (double& g : grad) g /= static_cast<double>(covariates.size());
  return grad;
}

LogisticModel fit_logistic_baseline(
    const std::vector<std::vector<double>>& covariates,
    const std::vector<int>& labels) {
  if (covariates.size() != labels.size() || covariates.empty())
    throw InvalidInput("fit_logistic_baseline: covariate/label mismatch");
  const std::size_t dim = covariates[0].size();
  for (const auto& row : covariates)
    if (row.size() != dim)
      throw InvalidInput("fit_logistic_baseline: ragged covariates");
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw UndefinedMetric("fit_logistic_baseline: both classes required");

  LogisticModel m;
  m.weights.assign(dim + 1, 0.0);
  double loss = logistic_nll(m, covariates, labels);
  const int max_iters = 10000;
  for (int iter = 0; iter < max_iters; ++iter) {
    m.iterations = iter + 1;
    const std::vector<double> grad = logistic_gradient(m, covariates, labels);
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (norm < 1e-8) {
      m.converged = true;
      break;
    }
    // Line-halving from a unit step until the loss improves.
    double step = 1.0;
    LogisticModel trial = m;
    while (step > 1e-18) {
      for (std::size_t j = 0; j < m.weights.size(); ++j)
        trial.weights[j] = m.weights[j] - step * grad[j];
      const double trial_loss = logistic_nll(trial, covariates, labels);
      if (trial_loss < loss) {
        m.weights = trial.weights;
        loss = trial_loss;
        break;
      }
      step /= 2.0;
    }
    if (step <= 1e-18) {
      // The loss can no longer be decreased in double precision. For this
      // convex problem that is the numerical optimum, so accept it as
      // converged when the gradient is already small.
      m.converged = norm < 1e-6;
      break;
    }
  }
  return m;
}

}  // namespace wsipipe
