#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "dampen/nn.hpp"
#include "dampen/rng.hpp"
#include "helpers.hpp"

using namespace dampen;
using testutil::blobs;
using testutil::random_model;

namespace {

ModelSpec small_spec() {
  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden_layers = {2};
  spec.num_classes = 3;
  spec.batch_norm = true;
  return spec;
}

void zero_parameters(ModelState& m) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m.param_count());
  m.unflatten(theta);
}

}  // namespace

TEST_CASE("init_model is bitwise deterministic and seed sensitive") {
  const ModelSpec spec = small_spec();
  const ModelState a = init_model(spec, 7);
  const ModelState b = init_model(spec, 7);
  const ModelState c = init_model(spec, 1);
  const ModelState d = init_model(spec, 2);
  CHECK(a.flatten() == b.flatten());
  CHECK(c.flatten() != d.flatten());
}

TEST_CASE("init_model sets batch-norm running variance to one") {
  const ModelState m = init_model(small_spec(), 3);
  for (const BatchNormLayer& bn : m.bn) {
    CHECK(bn.running_var.minCoeff() == 1.0);
    CHECK(bn.running_var.maxCoeff() == 1.0);
    CHECK(bn.scale.isOnes());
    CHECK(bn.shift.isZero());
  }
}

TEST_CASE("init_model rejects invalid specs") {
  ModelSpec spec = small_spec();
  spec.num_classes = 1;
  CHECK_THROWS_AS(init_model(spec, 0), std::invalid_argument);
  spec = small_spec();
  spec.hidden_layers = {};
  CHECK_THROWS_AS(init_model(spec, 0), std::invalid_argument);
  spec = small_spec();
  spec.hidden_layers = {0};
  CHECK_THROWS_AS(init_model(spec, 0), std::invalid_argument);
}

TEST_CASE("flatten/unflatten round-trips any vector") {
  ModelState m = random_model(5, {4, 3}, 3, true, 21);
  Rng rng(99);
  Eigen::VectorXd v(m.param_count());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  m.unflatten(v);
  CHECK(m.flatten() == v);
}

TEST_CASE("zero parameters give uniform class probabilities") {
  ModelState m = init_model(small_spec(), 1);
  zero_parameters(m);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 4);
  Eigen::MatrixXd p = forward(m, x, Mode::eval);
  for (int i = 0; i < p.rows(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(p(i, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are positive and sum to one") {
  const ModelState m = random_model(6, {8, 8}, 4, true, 5);
  Eigen::MatrixXd x = 3.0 * Eigen::MatrixXd::Random(40, 6);
  Eigen::MatrixXd p = forward(m, x, Mode::eval);
  for (int i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    CHECK(p.row(i).minCoeff() > 0.0);
  }
}

TEST_CASE("eval forward is independent of batch composition") {
  const ModelState m = random_model(6, {10, 7}, 3, true, 8);
  Eigen::MatrixXd x = 2.0 * Eigen::MatrixXd::Random(9, 6);
  Eigen::MatrixXd batched = forward(m, x, Mode::eval);
  for (int i = 0; i < x.rows(); ++i) {
    Eigen::MatrixXd single = forward(m, x.row(i), Mode::eval);
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(single(0, k) - batched(i, k)) < 1e-12);
  }
}

TEST_CASE("single linear layer matches a hand-rolled softmax oracle") {
  ModelSpec spec;
  spec.input_dim = 3;
  spec.hidden_layers = {3};
  spec.num_classes = 2;
  spec.batch_norm = false;
  ModelState m = init_model(spec, 4);
  // Make the hidden layer an identity map so the model is softmax(Wx + b).
  m.linear[0].weight = Eigen::MatrixXd::Identity(3, 3);
  m.linear[0].bias = Eigen::VectorXd::Constant(3, 10.0);  // keep ReLU active
  Eigen::MatrixXd w = m.linear[1].weight;
  Eigen::VectorXd b = m.linear[1].bias;
  b << 0.3, -0.2;

  Eigen::VectorXd x(3);
  x << 0.5, 1.0, 2.0;  // positive inputs so identity+ReLU passes them through
  Eigen::VectorXd z = w * (x + Eigen::VectorXd::Constant(3, 10.0)) + b;
  const double denom = std::exp(z[0]) + std::exp(z[1]);

  m.linear[1].bias = b;
  Eigen::MatrixXd p = forward(m, x.transpose(), Mode::eval);
  CHECK(p(0, 0) == doctest::Approx(std::exp(z[0]) / denom).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(std::exp(z[1]) / denom).epsilon(1e-12));
}

TEST_CASE("forward rejects wrong feature width and tiny BN train batches") {
  const ModelState m = init_model(small_spec(), 2);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS_AS(forward(m, bad, Mode::eval), std::invalid_argument);
  Eigen::MatrixXd one = Eigen::MatrixXd::Zero(1, 4);
  CHECK_THROWS_AS(forward(m, one, Mode::train), std::invalid_argument);
  CHECK_NOTHROW(forward(m, one, Mode::eval));
}

TEST_CASE("last-layer gradient matches the closed form") {
  const ModelState m = random_model(5, {6}, 3, true, 17);
  Eigen::VectorXd x(5);
  x << 0.2, -0.4, 1.1, 0.0, -0.9;
  const int label = 2;
  Eigen::VectorXd g = per_sample_grad(m, x, label);

  // probabilities and last hidden activation
  Eigen::MatrixXd p = forward(m, x.transpose(), Mode::eval);
  Eigen::VectorXd dlogits = p.row(0).transpose();
  dlogits[label] -= 1.0;

  // recompute the hidden activation by a forward through layer 0 only
  const LinearLayer& lin = m.linear[0];
  const BatchNormLayer& bn = m.bn[0];
  Eigen::VectorXd z = lin.weight * x + lin.bias;
  Eigen::ArrayXd inv_std = (bn.running_var.array() + 1e-5).sqrt().inverse();
  Eigen::VectorXd act =
      (((z - bn.running_mean).array() * inv_std) * bn.scale.array() +
       bn.shift.array())
          .max(0.0)
          .matrix();

  Eigen::MatrixXd expected_w = dlogits * act.transpose();
  // output block sits at the end of the flat layout
  const int out_params = 3 * 6 + 3;
  Eigen::VectorXd tail = g.tail(out_params);
  int idx = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c)
      CHECK(tail[idx++] == doctest::Approx(expected_w(r, c)).epsilon(1e-10));
  for (int r = 0; r < 3; ++r)
    CHECK(tail[idx++] == doctest::Approx(dlogits[r]).epsilon(1e-10));
}

TEST_CASE("per-sample gradient matches central finite differences") {
  Rng rng(123);
  for (int trial = 0; trial < 6; ++trial) {
    const bool bn = trial % 2 == 0;
    const ModelState m = random_model(4, {5, 4}, 3, bn, 1000 + trial);
    REQUIRE(m.param_count() <= 500);
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x[j] = rng.normal();
    const int label = static_cast<int>(rng.below(3));
    Eigen::VectorXd g = per_sample_grad(m, x, label);
    Eigen::VectorXd fd = testutil::finite_difference_grad(m, x, label);
    CHECK(testutil::grad_rel_error(g, fd) < 1e-5);
  }
}

TEST_CASE("saturated model has vanishing gradient") {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.hidden_layers = {2};
  spec.num_classes = 2;
  spec.batch_norm = false;
  ModelState m = init_model(spec, 1);
  zero_parameters(m);
  m.linear[0].weight = Eigen::MatrixXd::Identity(2, 2);
  m.linear[0].bias = Eigen::VectorXd::Constant(2, 1.0);
  m.linear[1].bias << 800.0, 0.0;  // class 0 wins with probability 1.0 exactly

  Eigen::VectorXd x(2);
  x << 0.3, 0.7;
  Eigen::VectorXd g = per_sample_grad(m, x, 0);
  CHECK(g.norm() < 1e-6);
}

TEST_CASE("per_sample_grad rejects out-of-range labels") {
  const ModelState m = init_model(small_spec(), 2);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(per_sample_grad(m, x, 3), std::invalid_argument);
  CHECK_THROWS_AS(per_sample_grad(m, x, -1), std::invalid_argument);
}

TEST_CASE("zero-epoch training is the identity") {
  const TabularDataset data = blobs(50, 4, 3, 1);
  ModelSpec spec = small_spec();
  const ModelState m = init_model(spec, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  const ModelState out = train(m, data, cfg);
  CHECK(out.flatten() == m.flatten());
}

TEST_CASE("training is bitwise deterministic per seed") {
  const TabularDataset data = blobs(200, 4, 3, 2);
  ModelSpec spec = small_spec();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 77;
  const ModelState a = train(init_model(spec, 5), data, cfg);
  const ModelState b = train(init_model(spec, 5), data, cfg);
  CHECK(a.flatten() == b.flatten());
  for (std::size_t l = 0; l < a.bn.size(); ++l) {
    CHECK(a.bn[l].running_mean == b.bn[l].running_mean);
    CHECK(a.bn[l].running_var == b.bn[l].running_var);
  }
}

TEST_CASE("separable blobs train to high accuracy with a 2x50 model") {
  const TabularDataset data = blobs(2000, 6, 3, 31);
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden_layers = {50, 50};
  spec.num_classes = 3;
  TrainConfig cfg;
  cfg.seed = 13;
  const ModelState m = train(init_model(spec, 13), data, cfg);
  CHECK(evaluate_accuracy(m, data) >= 0.95);
}

TEST_CASE("training rejects empty data and bad labels") {
  ModelSpec spec = small_spec();
  const ModelState m = init_model(spec, 1);
  TrainConfig cfg;
  TabularDataset data = blobs(10, 4, 3, 3);
  data.labels[4] = 3;
  CHECK_THROWS_AS(train(m, data, cfg), std::invalid_argument);
}

TEST_CASE("fine_tune equals one decayed epoch of train") {
  const TabularDataset data = blobs(300, 4, 3, 8);
  ModelSpec spec = small_spec();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 3;
  const ModelState m = train(init_model(spec, 2), data, cfg);

  TrainConfig ft_seed = cfg;
  ft_seed.seed = 555;
  const double last_lr = cfg.last_epoch_lr();
  const ModelState tuned = fine_tune(m, data, last_lr, ft_seed);

  TrainConfig manual = ft_seed;
  manual.epochs = 1;
  manual.learning_rate = last_lr * 0.95;
  const ModelState expected = train(m, data, manual);
  CHECK(tuned.flatten() == expected.flatten());
}

TEST_CASE("fine_tune with zero rate keeps parameters") {
  const TabularDataset data = blobs(100, 4, 3, 4);
  const ModelState m = init_model(small_spec(), 6);
  TrainConfig cfg;
  const ModelState out = fine_tune(m, data, 0.0, cfg);
  CHECK(out.flatten() == m.flatten());
}

TEST_CASE("evaluate_accuracy handles perfect and uniform models") {
  const TabularDataset data = blobs(10000, 4, 3, 12);
  ModelState uniform = init_model(small_spec(), 1);
  {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(uniform.param_count());
    uniform.unflatten(zeros);
  }
  // Uniform probabilities tie-break to class 0, so accuracy equals the
  // frequency of class 0, about one third on balanced blobs.
  const double acc = evaluate_accuracy(uniform, data);
  double freq0 = 0.0;
  for (int label : data.labels) freq0 += label == 0 ? 1.0 : 0.0;
  freq0 /= data.rows();
  CHECK(acc == doctest::Approx(freq0));
  CHECK(acc == doctest::Approx(1.0 / 3.0).epsilon(0.15));

  // A trained model on its separable training set gets everything right.
  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden_layers = {20};
  spec.num_classes = 3;
  TrainConfig cfg;
  cfg.seed = 4;
  const TabularDataset easy = blobs(200, 4, 3, 40, 10.0, 0.2);
  const ModelState m = train(init_model(spec, 4), easy, cfg);
  CHECK(evaluate_accuracy(m, easy) == 1.0);
}

TEST_CASE("binary accuracy and complement accuracy sum to one") {
  const TabularDataset data = blobs(500, 3, 2, 19);
  const ModelState m = random_model(3, {6}, 2, true, 33);
  TabularDataset complement = data;
  for (int& label : complement.labels) label = 1 - label;
  const double a = evaluate_accuracy(m, data);
  const double b = evaluate_accuracy(m, complement);
  CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
}
