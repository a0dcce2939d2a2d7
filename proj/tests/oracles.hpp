#pragma once

// Independent brute-force reference implementations used by both the unit
// tests and the acceptance harness. These deliberately avoid sharing code
// with the library: simple loops, no shortcuts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "wsipipe/image.hpp"

namespace oracle {

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double pos = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
  const std::size_t k = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(k);
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (v[k + 1] - v[k]) * frac;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pairwise Mann-Whitney AUC, ties 1/2.
inline std::optional<double> auc(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
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
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

struct OperatingPoint {
  double sensitivity = 0.0;
  double threshold = 0.0;
  double specificity = 0.0;
};

// Exhaustive scan over every candidate threshold (the unique scores):
// predicted positive means score > t; among thresholds with specificity >=
// target keep the maximal sensitivity, then the smallest threshold.
inline std::optional<OperatingPoint> sens_at_spec(
    const std::vector<double>& scores, const std::vector<int>& labels,
    double target) {
  std::vector<double> cand(scores);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  int n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  bool found = false;
  OperatingPoint best;
  for (double t : cand) {
    int tn = 0, tp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] == 0 && scores[i] <= t) ++tn;
      if (labels[i] == 1 && scores[i] > t) ++tp;
    }
    const double spec = static_cast<double>(tn) / n_neg;
    const double sens = static_cast<double>(tp) / n_pos;
    if (spec < target) continue;
    if (!found || sens > best.sensitivity ||
        (sens == best.sensitivity && t < best.threshold)) {
      best = {sens, t, spec};
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best;
}

// Chi-square survival function via the closed-form recurrence
//   Q(x; 1) = erfc(sqrt(x/2)),  Q(x; 2) = exp(-x/2),
//   Q(x; k+2) = Q(x; k) + x^(k/2) e^(-x/2) / (2^(k/2) Gamma(k/2 + 1)).
inline double chi_square_sf(double x, int df) {
  if (x <= 0.0) return 1.0;
  double q = (df % 2 == 1) ? std::erfc(std::sqrt(x / 2.0)) : std::exp(-x / 2.0);
  for (int k = (df % 2 == 1) ? 1 : 2; k + 2 <= df; k += 2) {
    q += std::pow(x / 2.0, k / 2.0) * std::exp(-x / 2.0) /
         std::tgamma(k / 2.0 + 1.0);
  }
  return q;
}

struct ChiSquare {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Pearson statistic on a contingency table; zero-expectation cells are
// skipped, as is conventional when a margin vanishes.
inline ChiSquare chi_square(const std::vector<std::vector<double>>& obs) {
  const std::size_t r = obs.size(), c = obs[0].size();
  std::vector<double> row(r, 0.0), col(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      row[i] += obs[i][j];
      col[j] += obs[i][j];
      total += obs[i][j];
    }
  ChiSquare out;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double e = row[i] * col[j] / total;
      if (e > 0.0) out.statistic += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  out.df = static_cast<int>((r - 1) * (c - 1));
  out.p_value = chi_square_sf(out.statistic, out.df);
  return out;
}

struct MannWhitney {
  double u = 0.0;
  double p_value = 1.0;
};

// Exact two-sided Mann-Whitney by enumerating every assignment of the
// pooled values into groups of the observed sizes. Deviations are measured
// as |2U - nm| in exact integers (2U is integral even with ties).
inline MannWhitney mann_whitney_exact(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const int n = static_cast<int>(a.size());
  const int total = static_cast<int>(pooled.size());
  auto two_u = [&](const std::vector<int>& group_a) {
    long long t = 0;
    std::vector<bool> in_a(total, false);
    for (int i : group_a) in_a[i] = true;
    for (int i = 0; i < total; ++i) {
      if (!in_a[i]) continue;
      for (int j = 0; j < total; ++j) {
        if (in_a[j]) continue;
        if (pooled[i] > pooled[j])
          t += 2;
        else if (pooled[i] == pooled[j])
          t += 1;
      }
    }
    return t;
  };
  std::vector<int> obs_idx(n);
  for (int i = 0; i < n; ++i) obs_idx[i] = i;
  const long long nm = static_cast<long long>(n) * (total - n);
  const long long obs_two_u = two_u(obs_idx);
  const long long obs_dev = std::llabs(obs_two_u - nm);

  long long hits = 0, count = 0;
  std::vector<int> pick;
  auto recurse = [&](auto&& self, int start) -> void {
    if (static_cast<int>(pick.size()) == n) {
      ++count;
      if (std::llabs(two_u(pick) - nm) >= obs_dev) ++hits;
      return;
    }
    for (int i = start; i < total; ++i) {
      pick.push_back(i);
      self(self, i + 1);
      pick.pop_back();
    }
  };
  recurse(recurse, 0);
  return {static_cast<double>(obs_two_u) / 2.0,
          static_cast<double>(hits) / static_cast<double>(count)};
}

// Exhaustive Otsu: evaluate all 256 split points with exact integer
// cross-multiplied comparisons of (sum0*w1 - sum1*w0)^2 / (w0*w1).
// Histogram totals must stay below ~2^16 so the products fit 128 bits.
inline int otsu_exhaustive(const std::array<std::uint64_t, 256>& hist) {
  using i128 = __int128;
  using u128 = unsigned __int128;
  std::uint64_t total = 0, tsum = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    tsum += static_cast<std::uint64_t>(i) * hist[i];
  }
  int best = -1;
  u128 bn = 0;
  std::uint64_t bd = 1;
  for (int t = 0; t < 256; ++t) {
    std::uint64_t w0 = 0, s0 = 0;
    for (int i = 0; i <= t; ++i) {
      w0 += hist[i];
      s0 += static_cast<std::uint64_t>(i) * hist[i];
    }
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const i128 a =
        static_cast<i128>(s0) * w1 - static_cast<i128>(tsum - s0) * w0;
    const u128 num = static_cast<u128>(a < 0 ? -a : a) *
                     static_cast<u128>(a < 0 ? -a : a);
    const std::uint64_t den = w0 * w1;
    if (best < 0 || num * bd > bn * den) {
      best = t;
      bn = num;
      bd = den;
    }
  }
  if (best < 0)
    for (int t = 0; t < 256; ++t)
      if (hist[t] > 0) return t;
  return best;
}

inline wsipipe::ImageGray to_gray_naive(const wsipipe::ImageRGB& img) {
  wsipipe::ImageGray g(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                       0.114 * img.at(x, y, 2);
      g.at(x, y) = static_cast<std::uint8_t>(std::lround(v));
    }
  return g;
}

// Naive 3x3 Laplacian response at an interior pixel of a grayscale raster.
inline int laplacian_at(const wsipipe::ImageGray& g, int x, int y) {
  return g.at(x - 1, y) + g.at(x + 1, y) + g.at(x, y - 1) + g.at(x, y + 1) -
         4 * g.at(x, y);
}

inline double variance_of_laplacian_naive(const wsipipe::ImageGray& g) {
  std::vector<double> resp;
  for (int y = 1; y + 1 < g.height; ++y)
    for (int x = 1; x + 1 < g.width; ++x)
      resp.push_back(static_cast<double>(laplacian_at(g, x, y)));
  double mean = 0.0;
  for (double r : resp) mean += r;
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double r : resp) var += (r - mean) * (r - mean);
  return var / static_cast<double>(resp.size());
}

inline wsipipe::BinaryMask pen_mask_naive(const wsipipe::ImageRGB& img,
                                          int threshold) {
  const wsipipe::ImageGray g = to_gray_naive(img);
  wsipipe::BinaryMask m(img.width, img.height, 0);
  for (int y = 1; y + 1 < g.height; ++y)
    for (int x = 1; x + 1 < g.width; ++x) {
      int sat = std::abs(laplacian_at(g, x, y));
      if (sat > 255) sat = 255;
      if (sat < threshold) m.at(x, y) = 1;
    }
  return m;
}

inline wsipipe::ImageRGB pool2x2_naive(const wsipipe::ImageRGB& img) {
  const int ow = (img.width + 1) / 2, oh = (img.height + 1) / 2;
  wsipipe::ImageRGB out(ow, oh);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0, count = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int x = 2 * ox + dx, y = 2 * oy + dy;
            if (x >= img.width || y >= img.height) continue;
            sum += img.at(x, y, c);
            ++count;
          }
        // Integer round-half-up of sum/count.
        out.at(ox, oy, c) = static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
      }
  return out;
}

// Grad-CAM coarse map: alpha_k = spatial mean of gradient plane k, map =
// ReLU(sum_k alpha_k * activation plane k).
inline std::vector<double> cam_coarse_naive(const std::vector<double>& act,
                                            const std::vector<double>& grad,
                                            int channels, int hw) {
  const int plane = hw * hw;
  std::vector<double> map(plane, 0.0);
  for (int k = 0; k < channels; ++k) {
    double alpha = 0.0;
    for (int i = 0; i < plane; ++i) alpha += grad[k * plane + i];
    alpha /= static_cast<double>(plane);
    for (int i = 0; i < plane; ++i) map[i] += alpha * act[k * plane + i];
  }
  for (double& v : map) v = v > 0.0 ? v : 0.0;
  return map;
}

}  // namespace oracle
