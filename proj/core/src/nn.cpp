#include "dampen/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dampen/rng.hpp"

namespace dampen {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;  // running = (1-m)*running + m*batch

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct LayerCache {
  Eigen::MatrixXd input;        // activations entering the layer
  Eigen::MatrixXd y;            // pre-ReLU output
  Eigen::MatrixXd xhat;         // normalized linear output (batch norm only)
  Eigen::RowVectorXd inv_std;   // 1/sqrt(var + eps)
  Eigen::RowVectorXd batch_mu;  // train mode only, for running-stat updates
  Eigen::RowVectorXd batch_var;
};

// Runs the hidden stack; returns the activation entering the output layer.
Eigen::MatrixXd run_hidden(const ModelState& model, const Eigen::MatrixXd& x,
                           Mode mode, std::vector<LayerCache>* caches) {
  const int hidden = static_cast<int>(model.spec.hidden_layers.size());
  if (model.spec.batch_norm && mode == Mode::train && x.rows() < 2) {
    throw std::invalid_argument(
        "train-mode forward with batch norm needs at least 2 rows, got " +
        std::to_string(x.rows()));
  }
  Eigen::MatrixXd act = x;
  for (int l = 0; l < hidden; ++l) {
    const LinearLayer& lin = model.linear[l];
    Eigen::MatrixXd z =
        (act * lin.weight.transpose()).rowwise() + lin.bias.transpose();
    LayerCache cache;
    if (caches) cache.input = std::move(act);
    Eigen::MatrixXd y;
    if (model.spec.batch_norm) {
      const BatchNormLayer& bnl = model.bn[l];
      Eigen::RowVectorXd mu, var;
      if (mode == Mode::train) {
        mu = z.colwise().mean();
        var = (z.rowwise() - mu).array().square().colwise().mean();
      } else {
        mu = bnl.running_mean.transpose();
        var = bnl.running_var.transpose();
      }
      Eigen::RowVectorXd inv_std =
          (var.array() + kBnEps).sqrt().inverse().matrix();
      Eigen::MatrixXd xhat =
          ((z.rowwise() - mu).array().rowwise() * inv_std.array()).matrix();
      y = ((xhat.array().rowwise() * bnl.scale.transpose().array()).rowwise() +
           bnl.shift.transpose().array())
              .matrix();
      if (caches) {
        cache.xhat = std::move(xhat);
        cache.inv_std = std::move(inv_std);
        cache.batch_mu = std::move(mu);
        cache.batch_var = std::move(var);
      }
    } else {
      y = std::move(z);
    }
    act = y.cwiseMax(0.0);
    if (caches) {
      cache.y = std::move(y);
      caches->push_back(std::move(cache));
    }
  }
  return act;
}

Eigen::MatrixXd logits_from_act(const ModelState& model,
                                const Eigen::MatrixXd& act) {
  const LinearLayer& out = model.linear.back();
  return (act * out.weight.transpose()).rowwise() + out.bias.transpose();
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - row_max;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

void check_features(const ModelState& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.spec.input_dim) {
    throw std::invalid_argument("feature width " + std::to_string(x.cols()) +
                                " does not match model input_dim " +
                                std::to_string(model.spec.input_dim));
  }
}

void check_dataset(const ModelState& model, const TabularDataset& data) {
  if (data.rows() == 0) throw std::invalid_argument("empty dataset");
  check_features(model, data.features);
  for (int label : data.labels) {
    if (label < 0 || label >= model.spec.num_classes) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " outside [0, " +
                                  std::to_string(model.spec.num_classes) + ")");
    }
  }
}

struct Grads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  std::vector<Eigen::VectorXd> scale;
  std::vector<Eigen::VectorXd> shift;

  static Grads zeros_like(const ModelState& m) {
    Grads g;
    for (const LinearLayer& lin : m.linear) {
      g.w.push_back(Eigen::MatrixXd::Zero(lin.weight.rows(), lin.weight.cols()));
      g.b.push_back(Eigen::VectorXd::Zero(lin.bias.size()));
    }
    for (const BatchNormLayer& bnl : m.bn) {
      g.scale.push_back(Eigen::VectorXd::Zero(bnl.scale.size()));
      g.shift.push_back(Eigen::VectorXd::Zero(bnl.shift.size()));
    }
    return g;
  }
};

// Train-mode backward pass over a batch; dlogits already carries the 1/n
// loss normalization. Batch-norm gradients go through the batch statistics.
void backward_batch(const ModelState& model, const std::vector<LayerCache>& caches,
                    const Eigen::MatrixXd& last_act,
                    const Eigen::MatrixXd& dlogits, Grads& g) {
  const int hidden = static_cast<int>(model.spec.hidden_layers.size());
  const LinearLayer& out = model.linear[hidden];
  g.w[hidden] = dlogits.transpose() * last_act;
  g.b[hidden] = dlogits.colwise().sum().transpose();
  Eigen::MatrixXd da = dlogits * out.weight;
  for (int l = hidden - 1; l >= 0; --l) {
    const LayerCache& c = caches[l];
    Eigen::MatrixXd dy =
        (da.array() * (c.y.array() > 0.0).cast<double>()).matrix();
    Eigen::MatrixXd dz;
    if (model.spec.batch_norm) {
      const BatchNormLayer& bnl = model.bn[l];
      g.scale[l] =
          (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
      g.shift[l] = dy.colwise().sum().transpose();
      Eigen::MatrixXd dxhat =
          (dy.array().rowwise() * bnl.scale.transpose().array()).matrix();
      Eigen::RowVectorXd m1 = dxhat.colwise().mean();
      Eigen::RowVectorXd m2 =
          (dxhat.array() * c.xhat.array()).colwise().mean().matrix();
      dz = (((dxhat.rowwise() - m1).array() -
             c.xhat.array().rowwise() * m2.array())
                .rowwise() *
            c.inv_std.array())
               .matrix();
    } else {
      dz = std::move(dy);
    }
    g.w[l] = dz.transpose() * c.input;
    g.b[l] = dz.colwise().sum().transpose();
    da = dz * model.linear[l].weight;
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (hidden_layers.empty())
    throw std::invalid_argument("hidden_layers must be non-empty");
  for (int h : hidden_layers) {
    if (h < 1) throw std::invalid_argument("hidden layer width must be >= 1");
  }
}

int ModelState::param_count() const {
  int m = 0;
  for (const LinearLayer& lin : linear)
    m += static_cast<int>(lin.weight.size() + lin.bias.size());
  for (const BatchNormLayer& bnl : bn)
    m += static_cast<int>(bnl.scale.size() + bnl.shift.size());
  return m;
}

Eigen::VectorXd ModelState::flatten() const {
  Eigen::VectorXd theta(param_count());
  Eigen::Index pos = 0;
  const int hidden = static_cast<int>(spec.hidden_layers.size());
  auto put_linear = [&](const LinearLayer& lin) {
    RowMajorMap(theta.data() + pos, lin.weight.rows(), lin.weight.cols()) =
        lin.weight;
    pos += lin.weight.size();
    theta.segment(pos, lin.bias.size()) = lin.bias;
    pos += lin.bias.size();
  };
  for (int l = 0; l < hidden; ++l) {
    put_linear(linear[l]);
    if (spec.batch_norm) {
      theta.segment(pos, bn[l].scale.size()) = bn[l].scale;
      pos += bn[l].scale.size();
      theta.segment(pos, bn[l].shift.size()) = bn[l].shift;
      pos += bn[l].shift.size();
    }
  }
  put_linear(linear[hidden]);
  return theta;
}

void ModelState::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != param_count())
    throw std::invalid_argument("parameter vector length mismatch");
  Eigen::Index pos = 0;
  const int hidden = static_cast<int>(spec.hidden_layers.size());
  auto take_linear = [&](LinearLayer& lin) {
    lin.weight = ConstRowMajorMap(theta.data() + pos, lin.weight.rows(),
                                  lin.weight.cols());
    pos += lin.weight.size();
    lin.bias = theta.segment(pos, lin.bias.size());
    pos += lin.bias.size();
  };
  for (int l = 0; l < hidden; ++l) {
    take_linear(linear[l]);
    if (spec.batch_norm) {
      bn[l].scale = theta.segment(pos, bn[l].scale.size());
      pos += bn[l].scale.size();
      bn[l].shift = theta.segment(pos, bn[l].shift.size());
      pos += bn[l].shift.size();
    }
  }
  take_linear(linear[hidden]);
}

ModelState init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelState state;
  state.spec = spec;
  state.seed = seed;
  Rng rng(seed);
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden_layers.begin(), spec.hidden_layers.end());
  dims.push_back(spec.num_classes);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    LinearLayer lin;
    lin.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) lin.weight(r, c) = rng.uniform(-bound, bound);
    lin.bias = Eigen::VectorXd::Zero(fan_out);
    state.linear.push_back(std::move(lin));
  }
  if (spec.batch_norm) {
    for (int h : spec.hidden_layers) {
      BatchNormLayer bnl;
      bnl.scale = Eigen::VectorXd::Ones(h);
      bnl.shift = Eigen::VectorXd::Zero(h);
      bnl.running_mean = Eigen::VectorXd::Zero(h);
      bnl.running_var = Eigen::VectorXd::Ones(h);
      state.bn.push_back(std::move(bnl));
    }
  }
  return state;
}

Eigen::MatrixXd forward_logits(const ModelState& model,
                               const Eigen::MatrixXd& features, Mode mode) {
  check_features(model, features);
  return logits_from_act(model, run_hidden(model, features, mode, nullptr));
}

Eigen::MatrixXd forward_log(const ModelState& model,
                            const Eigen::MatrixXd& features, Mode mode) {
  return log_softmax_rows(forward_logits(model, features, mode));
}

Eigen::MatrixXd forward(const ModelState& model, const Eigen::MatrixXd& features,
                        Mode mode) {
  return forward_log(model, features, mode).array().exp();
}

void per_sample_grad_into(const ModelState& model, const Eigen::VectorXd& x,
                          int label, Eigen::VectorXd& out) {
  if (label < 0 || label >= model.spec.num_classes)
    throw std::invalid_argument("label out of range: " + std::to_string(label));
  if (x.size() != model.spec.input_dim)
    throw std::invalid_argument("feature length mismatch");
  if (out.size() != model.param_count())
    throw std::invalid_argument("gradient buffer length mismatch");

  const int hidden = static_cast<int>(model.spec.hidden_layers.size());

  // Eval-mode forward keeping per-layer values.
  std::vector<Eigen::VectorXd> inputs(hidden + 1);  // activation entering layer
  std::vector<Eigen::VectorXd> pre_relu(hidden);
  std::vector<Eigen::VectorXd> xhat(hidden);
  Eigen::VectorXd act = x;
  for (int l = 0; l < hidden; ++l) {
    inputs[l] = act;
    Eigen::VectorXd z = model.linear[l].weight * act + model.linear[l].bias;
    Eigen::VectorXd y;
    if (model.spec.batch_norm) {
      const BatchNormLayer& bnl = model.bn[l];
      Eigen::ArrayXd inv_std = (bnl.running_var.array() + kBnEps).sqrt().inverse();
      xhat[l] = ((z - bnl.running_mean).array() * inv_std).matrix();
      y = (xhat[l].array() * bnl.scale.array() + bnl.shift.array()).matrix();
    } else {
      y = std::move(z);
    }
    pre_relu[l] = y;
    act = y.cwiseMax(0.0);
  }
  inputs[hidden] = act;
  Eigen::VectorXd logits =
      model.linear[hidden].weight * act + model.linear[hidden].bias;
  const double zmax = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - zmax).exp().matrix();
  p /= p.sum();

  // Backward; gradients are written straight into the flat layout.
  Eigen::VectorXd dz = p;
  dz(label) -= 1.0;

  const int m = static_cast<int>(out.size());
  std::vector<Eigen::Index> offsets(hidden + 1);
  {
    Eigen::Index pos = 0;
    for (int l = 0; l < hidden; ++l) {
      offsets[l] = pos;
      pos += model.linear[l].weight.size() + model.linear[l].bias.size();
      if (model.spec.batch_norm) pos += 2 * model.bn[l].scale.size();
    }
    offsets[hidden] = pos;
    pos += model.linear[hidden].weight.size() + model.linear[hidden].bias.size();
    if (pos != m) throw std::logic_error("flat layout mismatch");
  }

  auto write_linear = [&](int l, const Eigen::VectorXd& dout,
                          const Eigen::VectorXd& in) {
    const LinearLayer& lin = model.linear[l];
    RowMajorMap(out.data() + offsets[l], lin.weight.rows(), lin.weight.cols()) =
        dout * in.transpose();
    out.segment(offsets[l] + lin.weight.size(), lin.bias.size()) = dout;
  };

  write_linear(hidden, dz, inputs[hidden]);
  Eigen::VectorXd da = model.linear[hidden].weight.transpose() * dz;
  for (int l = hidden - 1; l >= 0; --l) {
    Eigen::VectorXd dy =
        (da.array() * (pre_relu[l].array() > 0.0).cast<double>()).matrix();
    Eigen::VectorXd dzl;
    if (model.spec.batch_norm) {
      const BatchNormLayer& bnl = model.bn[l];
      const Eigen::Index base =
          offsets[l] + model.linear[l].weight.size() + model.linear[l].bias.size();
      out.segment(base, bnl.scale.size()) =
          (dy.array() * xhat[l].array()).matrix();
      out.segment(base + bnl.scale.size(), bnl.shift.size()) = dy;
      Eigen::ArrayXd inv_std = (bnl.running_var.array() + kBnEps).sqrt().inverse();
      dzl = (dy.array() * bnl.scale.array() * inv_std).matrix();
    } else {
      dzl = std::move(dy);
    }
    write_linear(l, dzl, inputs[l]);
    da = model.linear[l].weight.transpose() * dzl;
  }
}

Eigen::VectorXd per_sample_grad(const ModelState& model, const Eigen::VectorXd& x,
                                int label) {
  Eigen::VectorXd out(model.param_count());
  per_sample_grad_into(model, x, label, out);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("lr_decay must be in (0, 1]");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

double TrainConfig::last_epoch_lr() const {
  return learning_rate * std::pow(lr_decay, std::max(0, epochs - 1));
}

ModelState train(const ModelState& model, const TabularDataset& data,
                 const TrainConfig& cfg) {
  cfg.validate();
  check_dataset(model, data);
  ModelState state = model;
  if (cfg.epochs == 0) return state;

  const int n = data.rows();
  const int hidden = static_cast<int>(model.spec.hidden_layers.size());
  Grads velocity = Grads::zeros_like(state);
  Rng shuffle_rng(cfg.seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);
    shuffle_rng.shuffle(order);

    // Consecutive chunks of the shuffled order; a trailing single row is
    // folded into the previous batch so batch norm always sees >= 2 rows.
    std::vector<std::pair<int, int>> batches;
    int start = 0;
    while (start < n) {
      int len = std::min(cfg.batch_size, n - start);
      if (n - (start + len) == 1) len += 1;
      batches.emplace_back(start, len);
      start += len;
    }

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [bstart, blen] = batches[bi];
      Eigen::MatrixXd xb(blen, data.features.cols());
      std::vector<int> yb(blen);
      for (int i = 0; i < blen; ++i) {
        xb.row(i) = data.features.row(order[bstart + i]);
        yb[i] = data.labels[order[bstart + i]];
      }

      std::vector<LayerCache> caches;
      caches.reserve(hidden);
      Eigen::MatrixXd last_act = run_hidden(state, xb, Mode::train, &caches);
      Eigen::MatrixXd logits = logits_from_act(state, last_act);
      Eigen::MatrixXd logp = log_softmax_rows(logits);

      double loss = 0.0;
      for (int i = 0; i < blen; ++i) loss -= logp(i, yb[i]);
      loss /= blen;
      if (!std::isfinite(loss)) {
        std::ostringstream oss;
        oss << "non-finite training loss at epoch " << epoch << " batch " << bi;
        throw std::runtime_error(oss.str());
      }

      Eigen::MatrixXd dlogits = logp.array().exp().matrix();
      for (int i = 0; i < blen; ++i) dlogits(i, yb[i]) -= 1.0;
      dlogits /= static_cast<double>(blen);

      Grads g = Grads::zeros_like(state);
      backward_batch(state, caches, last_act, dlogits, g);

      if (state.spec.batch_norm) {
        for (int l = 0; l < hidden; ++l) {
          BatchNormLayer& bnl = state.bn[l];
          bnl.running_mean = (1.0 - kBnMomentum) * bnl.running_mean +
                             kBnMomentum * caches[l].batch_mu.transpose();
          bnl.running_var = (1.0 - kBnMomentum) * bnl.running_var +
                            kBnMomentum * caches[l].batch_var.transpose();
        }
      }

      for (std::size_t l = 0; l < state.linear.size(); ++l) {
        Eigen::MatrixXd step_w = g.w[l] + cfg.weight_decay * state.linear[l].weight;
        if (cfg.momentum > 0.0) {
          velocity.w[l] = cfg.momentum * velocity.w[l] + step_w;
          velocity.b[l] = cfg.momentum * velocity.b[l] + g.b[l];
          state.linear[l].weight -= lr * velocity.w[l];
          state.linear[l].bias -= lr * velocity.b[l];
        } else {
          state.linear[l].weight -= lr * step_w;
          state.linear[l].bias -= lr * g.b[l];
        }
      }
      for (std::size_t l = 0; l < state.bn.size(); ++l) {
        if (cfg.momentum > 0.0) {
          velocity.scale[l] = cfg.momentum * velocity.scale[l] + g.scale[l];
          velocity.shift[l] = cfg.momentum * velocity.shift[l] + g.shift[l];
          state.bn[l].scale -= lr * velocity.scale[l];
          state.bn[l].shift -= lr * velocity.shift[l];
        } else {
          state.bn[l].scale -= lr * g.scale[l];
          state.bn[l].shift -= lr * g.shift[l];
        }
      }
    }
  }
  return state;
}

ModelState fine_tune(const ModelState& model, const TabularDataset& data,
                     double last_lr, const TrainConfig& cfg) {
  if (last_lr < 0.0) throw std::invalid_argument("last_lr must be >= 0");
  if (last_lr == 0.0) return model;  // zero step size keeps parameters
  TrainConfig ft = cfg;
  ft.epochs = 1;
  ft.learning_rate = last_lr * 0.95;
  return train(model, data, ft);
}

double evaluate_accuracy(const ModelState& model, const TabularDataset& data) {
  check_dataset(model, data);
  Eigen::MatrixXd logits = forward_logits(model, data.features, Mode::eval);
  int correct = 0;
  for (int i = 0; i < data.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < model.spec.num_classes; ++k) {
      if (logits(i, k) > logits(i, best)) best = k;  // ties keep lowest index
    }
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.rows();
}

}  // namespace dampen
