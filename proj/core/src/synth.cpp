#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dampen/data.hpp"
#include "dampen/nn.hpp"
#include "dampen/rng.hpp"

namespace dampen {

namespace {

// Target class counts proportional to (k+1)^-a, summing to n exactly
// (largest remainder rounding).
std::vector<int> power_law_targets(int n, int k, double exponent) {
  std::vector<double> weights(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    weights[i] = std::pow(static_cast<double>(i + 1), -exponent);
    total += weights[i];
  }
  std::vector<int> counts(k);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    counts[i] = static_cast<int>(exact);
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::sort(remainders.begin(), remainders.end(), [](auto a, auto b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < n - assigned; ++i) ++counts[remainders[i].second];
  return counts;
}

}  // namespace

TabularDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n < 1 || cfg.d < 1) throw std::invalid_argument("n and d must be >= 1");
  if (cfg.num_classes < 2) throw std::invalid_argument("need >= 2 classes");
  if (cfg.clusters < 1) throw std::invalid_argument("need >= 1 cluster");

  Rng rng(cfg.seed);

  Eigen::MatrixXd centers(cfg.clusters, cfg.d);
  for (int c = 0; c < cfg.clusters; ++c)
    for (int j = 0; j < cfg.d; ++j)
      centers(c, j) = cfg.center_spread * rng.normal();

  // Power-law cluster weights: a few dominant subpopulations and a long
  // tail of rare ones.
  std::vector<double> cluster_cdf(cfg.clusters);
  {
    double total = 0.0;
    for (int c = 0; c < cfg.clusters; ++c) {
      total += std::pow(static_cast<double>(c + 1), -cfg.cluster_exponent);
      cluster_cdf[c] = total;
    }
    for (double& v : cluster_cdf) v /= total;
  }

  Eigen::MatrixXd features(cfg.n, cfg.d);
  for (int i = 0; i < cfg.n; ++i) {
    const double u = rng.uniform();
    const int c = static_cast<int>(
        std::lower_bound(cluster_cdf.begin(), cluster_cdf.end(), u) -
        cluster_cdf.begin());
    for (int j = 0; j < cfg.d; ++j)
      features(i, j) = centers(c, j) + cfg.feature_noise * rng.normal();
  }

  // Noisy teacher scores; the noise level sets the irreducible error of the
  // benchmark.
  ModelSpec teacher_spec;
  teacher_spec.input_dim = cfg.d;
  teacher_spec.hidden_layers = {cfg.teacher_hidden};
  teacher_spec.num_classes = cfg.num_classes;
  teacher_spec.batch_norm = false;
  const ModelState teacher =
      init_model(teacher_spec, mix_seed(cfg.seed, "synthetic-teacher"));
  Eigen::MatrixXd scores =
      cfg.logit_scale * forward_logits(teacher, features, Mode::eval);
  for (int i = 0; i < cfg.n; ++i)
    for (int k = 0; k < cfg.num_classes; ++k)
      scores(i, k) += cfg.label_noise * rng.normal();

  // Per-class offsets pushed toward the power-law class profile.
  const std::vector<int> targets =
      power_law_targets(cfg.n, cfg.num_classes, cfg.power_exponent);
  Eigen::VectorXd offsets = Eigen::VectorXd::Zero(cfg.num_classes);
  std::vector<int> labels(cfg.n);
  std::vector<int> counts(cfg.num_classes);
  for (int iter = 0; iter < 200; ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < cfg.n; ++i) {
      int best = 0;
      for (int k = 1; k < cfg.num_classes; ++k)
        if (scores(i, k) + offsets[k] > scores(i, best) + offsets[best])
          best = k;
      labels[i] = best;
      ++counts[best];
    }
    double worst = 0.0;
    for (int k = 0; k < cfg.num_classes; ++k) {
      const double err = std::abs(counts[k] - targets[k]) /
                         std::max(1.0, static_cast<double>(targets[k]));
      worst = std::max(worst, err);
    }
    if (worst < 0.02) break;
    for (int k = 0; k < cfg.num_classes; ++k) {
      const double c = std::max(1.0, static_cast<double>(counts[k]));
      offsets[k] += 0.5 * std::log(static_cast<double>(targets[k]) / c);
    }
  }

  TabularDataset ds = make_dataset(features, labels, cfg.num_classes);
  return ds;
}

TabularDataset generate_synthetic(int n, int d, int num_classes,
                                  std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.num_classes = num_classes;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace dampen
