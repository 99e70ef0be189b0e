#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dampen/data.hpp"
#include "dampen/nn.hpp"

namespace dampen {

/// One-feature logistic regression over per-sample losses; members are the
/// positive class. Inputs are standardized with the training moments stored
/// here.
struct AttackModel {
  double weight = 0.0;
  double bias = 0.0;
  double feature_mean = 0.0;
  double feature_std = 1.0;
  bool degenerate = false;  // all training losses identical; predicts by tie rule

  double member_probability(double loss) const;
  /// Decision threshold 0.5; a loss exactly on the boundary counts as member.
  bool predicts_member(double loss) const {
    return member_probability(loss) >= 0.5;
  }
};

/// Eval-mode cross-entropy loss of every row.
Eigen::VectorXd per_sample_losses(const ModelState& model,
                                  const TabularDataset& data);

/// Full-batch gradient descent, 1000 iterations at step 0.1, on standardized
/// losses; classes are balanced by seeded down-sampling of the larger side.
AttackModel fit_attacker(const std::vector<double>& member_losses,
                         const std::vector<double>& nonmember_losses,
                         std::uint64_t seed);

/// Percentage (0-100) of forget losses the attacker classifies as member.
double mia_score(const AttackModel& attacker,
                 const std::vector<double>& forget_losses);

std::vector<double> to_vector(const Eigen::VectorXd& v);

}  // namespace dampen
