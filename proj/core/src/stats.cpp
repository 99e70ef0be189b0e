#include "dampen/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dampen {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  if (!(p >= 0.0 && p <= 100.0))
    throw std::invalid_argument("percentile p must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double h = (static_cast<double>(n) - 1.0) * p / 100.0;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return values[n - 1];
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double wilcoxon_signed_rank_p(const std::vector<double>& a,
                              const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("wilcoxon needs equal-length samples");
  std::vector<double> d;
  d.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) d.push_back(diff);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  // Midranks of |d|.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(d[i]) < std::abs(d[j]);
  });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  double r_plus = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (d[k] > 0.0) r_plus += rank[k];

  const double nn = static_cast<double>(n);
  const double mn = nn * (nn + 1.0) / 4.0;
  const double var = (nn * (nn + 1.0) * (2.0 * nn + 1.0) - tie_term / 2.0) / 24.0;
  if (var <= 0.0) return 1.0;
  const double z = (r_plus - mn) / std::sqrt(var);
  const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  return std::min(1.0, std::max(0.0, p));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() <= 1) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace dampen
