#pragma once

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "dampen/data.hpp"
#include "dampen/nn.hpp"
#include "dampen/rng.hpp"

namespace testutil {

/// Fresh directory under the build tree's temp area; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& hint) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dampen-test-" + hint + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

/// Well-separated Gaussian blobs, one per class; linearly separable for
/// reasonable n and d.
inline dampen::TabularDataset blobs(int n, int d, int k, std::uint64_t seed,
                                    double spread = 6.0, double noise = 1.0) {
  dampen::Rng rng(seed);
  Eigen::MatrixXd centers(k, d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) centers(c, j) = spread * rng.normal();
  Eigen::MatrixXd x(n, d);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng.below(k));
    labels[i] = c;
    for (int j = 0; j < d; ++j) x(i, j) = centers(c, j) + noise * rng.normal();
  }
  return dampen::make_dataset(x, labels, k);
}

/// Small random model for gradient checks.
inline dampen::ModelState random_model(int input_dim, std::vector<int> hidden,
                                       int classes, bool batch_norm,
                                       std::uint64_t seed) {
  dampen::ModelSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_layers = std::move(hidden);
  spec.num_classes = classes;
  spec.batch_norm = batch_norm;
  dampen::ModelState m = dampen::init_model(spec, seed);
  if (batch_norm) {
    // Non-trivial running statistics so eval-mode BN is exercised.
    dampen::Rng rng(dampen::mix_seed(seed, "bn-stats"));
    for (auto& bn : m.bn) {
      for (Eigen::Index i = 0; i < bn.running_mean.size(); ++i) {
        bn.running_mean[i] = 0.5 * rng.normal();
        bn.running_var[i] = 0.5 + rng.uniform();
        bn.scale[i] = 0.5 + rng.uniform();
        bn.shift[i] = 0.3 * rng.normal();
      }
    }
  }
  return m;
}

/// Central finite differences of the per-sample loss over the flat
/// parameter vector, the gradient oracle for per_sample_grad.
inline Eigen::VectorXd finite_difference_grad(const dampen::ModelState& model,
                                              const Eigen::VectorXd& x, int label,
                                              double step = 1e-5) {
  const Eigen::VectorXd theta = model.flatten();
  Eigen::VectorXd grad(theta.size());
  Eigen::MatrixXd row = x.transpose();
  dampen::ModelState probe = model;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t[i] = theta[i] + step;
    probe.unflatten(t);
    const double up =
        -dampen::forward_log(probe, row, dampen::Mode::eval)(0, label);
    t[i] = theta[i] - step;
    probe.unflatten(t);
    const double down =
        -dampen::forward_log(probe, row, dampen::Mode::eval)(0, label);
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Relative error with an absolute floor for near-zero derivatives; finite
/// differences cannot resolve coordinates much below the floor.
inline double grad_rel_error(const Eigen::VectorXd& analytic,
                             const Eigen::VectorXd& numeric,
                             double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace testutil
