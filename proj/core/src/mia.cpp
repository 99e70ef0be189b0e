#include "dampen/mia.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dampen/rng.hpp"

namespace dampen {

namespace {

constexpr int kIterations = 1000;
constexpr double kStep = 0.1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Seeded down-sample of `v` to k elements.
std::vector<double> down_sample(const std::vector<double>& v, std::size_t k,
                                Rng& rng) {
  if (v.size() <= k) return v;
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

double AttackModel::member_probability(double loss) const {
  const double z = (loss - feature_mean) / feature_std;
  return sigmoid(weight * z + bias);
}

Eigen::VectorXd per_sample_losses(const ModelState& model,
                                  const TabularDataset& data) {
  if (data.rows() == 0)
    throw std::invalid_argument("per_sample_losses: empty dataset");
  Eigen::MatrixXd logp = forward_log(model, data.features, Mode::eval);
  Eigen::VectorXd losses(data.rows());
  for (int i = 0; i < data.rows(); ++i) {
    const int y = data.labels[i];
    if (y < 0 || y >= model.spec.num_classes)
      throw std::invalid_argument("label out of range: " + std::to_string(y));
    losses[i] = -logp(i, y);
  }
  return losses;
}

AttackModel fit_attacker(const std::vector<double>& member_losses,
                         const std::vector<double>& nonmember_losses,
                         std::uint64_t seed) {
  if (member_losses.empty() || nonmember_losses.empty())
    throw std::invalid_argument("fit_attacker: empty loss vector");

  Rng rng(seed);
  const std::size_t k = std::min(member_losses.size(), nonmember_losses.size());
  const std::vector<double> members = down_sample(member_losses, k, rng);
  const std::vector<double> nonmembers = down_sample(nonmember_losses, k, rng);

  std::vector<double> xs;
  std::vector<double> ys;  // 1 = member
  xs.reserve(2 * k);
  ys.reserve(2 * k);
  for (double v : members) {
    xs.push_back(v);
    ys.push_back(1.0);
  }
  for (double v : nonmembers) {
    xs.push_back(v);
    ys.push_back(0.0);
  }

  const double n = static_cast<double>(xs.size());
  const double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double v : xs) var += (v - mu) * (v - mu);
  var /= n;
  const double sd = std::sqrt(var);

  AttackModel att;
  att.feature_mean = mu;
  if (sd == 0.0) {
    // Every loss identical across both classes: nothing to learn. weight 0,
    // bias 0 leaves the prediction to the tie rule; flagged for the caller.
    att.feature_std = 1.0;
    att.degenerate = true;
    return att;
  }
  att.feature_std = sd;

  std::vector<double> zs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) zs[i] = (xs[i] - mu) / sd;

  double w = 0.0, b = 0.0;
  for (int it = 0; it < kIterations; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const double e = sigmoid(w * zs[i] + b) - ys[i];
      gw += e * zs[i];
      gb += e;
    }
    w -= kStep * gw / n;
    b -= kStep * gb / n;
  }
  att.weight = w;
  att.bias = b;
  return att;
}

double mia_score(const AttackModel& attacker,
                 const std::vector<double>& forget_losses) {
  if (forget_losses.empty())
    throw std::invalid_argument("mia_score: empty forget losses");
  std::size_t members = 0;
  for (double loss : forget_losses)
    if (attacker.predicts_member(loss)) ++members;
  return 100.0 * static_cast<double>(members) /
         static_cast<double>(forget_losses.size());
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace dampen
