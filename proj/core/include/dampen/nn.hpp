#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dampen/data.hpp"

namespace dampen {

struct ModelSpec {
  int input_dim = 0;
  std::vector<int> hidden_layers;  // e.g. {100, 100, 100}
  int num_classes = 0;
  bool batch_norm = true;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const ModelSpec&) const = default;
};

struct LinearLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct BatchNormLayer {
  Eigen::VectorXd scale;         // trainable (gamma)
  Eigen::VectorXd shift;         // trainable (beta)
  Eigen::VectorXd running_mean;  // state, never part of theta
  Eigen::VectorXd running_var;
};

/// A fully-connected classifier. Each hidden layer is
/// linear -> batch norm (optional) -> ReLU; the output layer is linear
/// followed by softmax.
///
/// The trainable parameter vector theta is flattened layer by layer:
/// for each hidden layer, weight (row-major), bias, then batch-norm scale
/// and shift; finally the output weight (row-major) and bias. Running
/// batch-norm statistics are model state, not parameters.
struct ModelState {
  ModelSpec spec;
  std::vector<LinearLayer> linear;   // hidden layers then output layer
  std::vector<BatchNormLayer> bn;    // one per hidden layer when enabled
  std::uint64_t seed = 0;

  int param_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);
};

enum class Mode { train, eval };

/// Seeded initialization: weights uniform in +-sqrt(6 / fan_in), biases zero,
/// batch-norm scale 1 / shift 0 / running mean 0 / running variance 1.
/// Equal (spec, seed) gives bitwise-equal states.
ModelState init_model(const ModelSpec& spec, std::uint64_t seed);

/// Class probabilities, one softmax row per input row. Train mode normalizes
/// with batch statistics (population variance, needs >= 2 rows); eval mode
/// uses running statistics and is independent of batch composition.
Eigen::MatrixXd forward(const ModelState& model, const Eigen::MatrixXd& features,
                        Mode mode);

/// Log-probabilities; same contract as forward but numerically safe for
/// losses of near-saturated models.
Eigen::MatrixXd forward_log(const ModelState& model,
                            const Eigen::MatrixXd& features, Mode mode);

/// Pre-softmax outputs.
Eigen::MatrixXd forward_logits(const ModelState& model,
                               const Eigen::MatrixXd& features, Mode mode);

/// Gradient of the per-sample negative log-likelihood -log p(label | x)
/// w.r.t. theta, evaluated in eval mode (fixed batch-norm statistics).
Eigen::VectorXd per_sample_grad(const ModelState& model,
                                const Eigen::VectorXd& x, int label);

/// Allocation-free variant for tight loops; `out` must have length
/// param_count().
void per_sample_grad_into(const ModelState& model, const Eigen::VectorXd& x,
                          int label, Eigen::VectorXd& out);

struct TrainConfig {
  int epochs = 25;
  double learning_rate = 0.1;
  double lr_decay = 0.95;      // per-epoch multiplier; epoch e runs at lr * decay^e
  double weight_decay = 1e-4;  // L2 on linear weights only, not biases or BN
  double momentum = 0.0;
  int batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate of the final epoch, lr * decay^(epochs - 1).
  double last_epoch_lr() const;
};

/// Mini-batch SGD with seeded per-epoch shuffling. Returns a new state; equal
/// inputs and seed give bitwise-equal outputs. A trailing batch of size 1 is
/// folded into the previous batch so batch norm always sees >= 2 rows.
ModelState train(const ModelState& model, const TabularDataset& data,
                 const TrainConfig& cfg);

/// One SGD epoch at rate last_lr * 0.95 (the decayed continuation of
/// training); batch size, weight decay and seed come from cfg, momentum
/// starts from zero.
ModelState fine_tune(const ModelState& model, const TabularDataset& data,
                     double last_lr, const TrainConfig& cfg);

/// Argmax accuracy; ties break toward the lowest class index.
double evaluate_accuracy(const ModelState& model, const TabularDataset& data);

}  // namespace dampen
