#pragma once

#include <vector>

namespace dampen {

/// p-th percentile (p in [0, 100]) with linear interpolation between order
/// statistics: h = (n-1) * p/100, result = v[floor(h)] + frac(h) *
/// (v[floor(h)+1] - v[floor(h)]) on the sorted values.
double percentile(std::vector<double> values, double p);

/// Two-sided Wilcoxon signed-rank test on paired samples, normal
/// approximation with midranks and tie-corrected variance; zero differences
/// are dropped. Returns 1.0 when every pair is identical.
double wilcoxon_signed_rank_p(const std::vector<double>& a,
                              const std::vector<double>& b);

double mean(const std::vector<double>& v);
/// Sample standard deviation (n-1 denominator); 0 for n <= 1.
double sample_std(const std::vector<double>& v);

}  // namespace dampen
