#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace amnet {

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ScorePair {
  double ground_truth = 0.0;
  double prediction = 0.0;
};

/// 1-based ranks, smallest first; ties share the mean of the positions they occupy.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("fractional_ranks: empty input");
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // positions i..j (0-based) → ranks i+1..j+1
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw UndefinedCorrelation("correlation needs at least two pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelation("correlation undefined for a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace detail {
inline void split_pairs(std::span<const ScorePair> pairs, std::vector<double>& gt, std::vector<double>& pred) {
  gt.reserve(pairs.size());
  pred.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!std::isfinite(p.ground_truth) || !std::isfinite(p.prediction))
      throw std::invalid_argument("score pair holds a non-finite value");
    gt.push_back(p.ground_truth);
    pred.push_back(p.prediction);
  }
}
}  // namespace detail

/// Pearson correlation of fractional ranks. Agrees with the
/// 1 − 6Σd²/(N(N²−1)) closed form whenever there are no ties.
inline double spearman_rho(std::span<const double> ground_truth, std::span<const double> prediction) {
  if (ground_truth.size() != prediction.size()) throw std::invalid_argument("spearman_rho: length mismatch");
  if (ground_truth.size() < 2) throw UndefinedCorrelation("spearman_rho needs at least two pairs");
  const auto ra = fractional_ranks(ground_truth);
  const auto rb = fractional_ranks(prediction);
  return pearson(ra, rb);
}

inline double spearman_rho(std::span<const ScorePair> pairs) {
  std::vector<double> gt, pred;
  detail::split_pairs(pairs, gt, pred);
  return spearman_rho(gt, pred);
}

/// Tie-free closed form 1 − 6Σd²/(N(N²−1)).
inline double spearman_closed_form(std::span<const double> ground_truth, std::span<const double> prediction) {
  if (ground_truth.size() != prediction.size()) throw std::invalid_argument("spearman_closed_form: length mismatch");
  if (ground_truth.size() < 2) throw UndefinedCorrelation("spearman_closed_form needs at least two pairs");
  const auto ra = fractional_ranks(ground_truth);
  const auto rb = fractional_ranks(prediction);
  double d2 = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double n = static_cast<double>(ra.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

inline double mse(std::span<const ScorePair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("mse: empty input");
  double total = 0.0;
  for (const auto& p : pairs) {
    const double d = p.prediction - p.ground_truth;
    total += d * d;
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace amnet
