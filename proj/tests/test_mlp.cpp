#include <doctest.h>

#include <cmath>
#include <random>

#include "support/synthetic.hpp"
#include "tabvec/error.hpp"
#include "tabvec/mlp.hpp"

using namespace tabvec;

namespace {

MlpParamsd random_params(Eigen::Index d, Eigen::Index h, Eigen::Index k, unsigned seed, double scale = 1.0) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  MlpParamsd p(d, h, k);
  for (Eigen::Index i = 0; i < p.parameter_count(); ++i) p.flat(i) = normal(rng);
  return p;
}

Eigen::MatrixXd random_inputs(Eigen::Index d, Eigen::Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(d, n);
  for (auto& v : x.reshaped()) v = normal(rng);
  return x;
}

std::vector<int> random_labels(std::size_t n, int k, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = std::uniform_int_distribution<int>(0, k - 1)(rng);
  return y;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  int hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i];
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("forward pass examples") {
  const MlpParamsd zero(3, 4, 5);
  const auto p = forward(zero, Eigen::VectorXd(Eigen::Vector3d(1, -2, 3)));
  for (Eigen::Index c = 0; c < 5; ++c) CHECK(p[c] == doctest::Approx(0.2));

  // Output layer wired so the logits are exactly (10, 0).
  MlpParamsd crafted(1, 1, 2);
  crafted.b2 << 10, 0;
  const auto q = forward(crafted, Eigen::VectorXd::Zero(1).eval());
  CHECK(q[0] == doctest::Approx(0.9999546021312976).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(4.5397868702434395e-05).epsilon(1e-10));

  const std::vector<int> labels{0, 1, 2, 3};
  CHECK(loss(MlpParamsd(2, 3, 4), random_inputs(2, 4, 1), labels) == doctest::Approx(1.3862943611198906).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one, even for extreme logits") {
  for (unsigned s = 0; s < 50; ++s) {
    const auto p = random_params(6, 8, 5, s, s % 2 ? 30.0 : 1.0);
    const auto probs = forward_batch(p, random_inputs(6, 7, s + 100));
    CHECK(probs.allFinite());
    CHECK((probs.array() >= 0).all());
    CHECK((probs.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(forward_batch(MlpParamsd(3, 2, 2), Eigen::MatrixXd::Zero(4, 1)), DataError);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax<double>(Eigen::Vector3d(0.25, 0.5, 0.5)) == 1);
  CHECK(predict(MlpParamsd(2, 2, 4), Eigen::VectorXd(Eigen::Vector2d(1, 1))) == 0);
}

TEST_CASE("backpropagation matches central differences") {
  for (unsigned s = 0; s < 10; ++s) {
    const auto p = random_params(5, 7, 4, s, 0.5);
    const auto x = random_inputs(5, 9, s + 20);
    const auto y = random_labels(9, 4, s + 40);
    CHECK(gradient_check(p, x, std::span<const int>(y), 1e-5) < 1e-4);
  }
  // A tiny first layer keeps tanh in its linear regime.
  auto linear = random_params(4, 3, 3, 99);
  linear.w1 *= 1e-4;
  linear.b1 *= 1e-4;
  const auto y = random_labels(6, 3, 5);
  const double err = gradient_check(linear, random_inputs(4, 6, 98), std::span<const int>(y), 1e-5);
  // Output-layer gradients are ~1e-5 here, so eps/h roundoff dominates.
  CHECK(err < 1e-5);
}

TEST_CASE("sparse inputs give the dense gradient") {
  const auto p = random_params(40, 6, 3, 8, 0.5);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(40, 10);
  std::mt19937 rng(4);
  for (int j = 0; j < 10; ++j)
    for (int t = 0; t < 3; ++t) x(std::uniform_int_distribution<int>(0, 39)(rng), j) = 0.3 + t;
  const auto y = random_labels(10, 3, 6);
  const Eigen::SparseMatrix<double> sx = x.sparseView();
  const auto dense = loss_and_gradient(p, x, std::span<const int>(y));
  const auto sparse = loss_and_gradient(p, sx, std::span<const int>(y));
  CHECK(sparse.loss == doctest::Approx(dense.loss).epsilon(1e-14));
  for (Eigen::Index i = 0; i < p.parameter_count(); ++i)
    CHECK(std::abs(sparse.gradient.flat(i) - dense.gradient.flat(i)) < 1e-14);
  CHECK(gradient_check(p, x, std::span<const int>(y), sparse.gradient, 1e-5) < 1e-4);
}

TEST_CASE("a corrupted gradient is caught") {
  const auto p = random_params(4, 5, 3, 1, 0.5);
  const auto x = random_inputs(4, 8, 2);
  const auto y = random_labels(8, 3, 3);
  auto g = loss_and_gradient(p, x, std::span<const int>(y)).gradient;
  g.w1(2, 1) += 0.5 + std::abs(g.w1(2, 1));
  CHECK(gradient_check(p, x, std::span<const int>(y), g, 1e-5) > 1e-2);
}

TEST_CASE("training fits separable data") {
  // Four points, two classes split by the sign of the first coordinate.
  Eigen::MatrixXd x(2, 4);
  x << 1, 2, -1, -2,  //
      1, -1, 1, -1;
  const std::vector<int> y{0, 0, 1, 1};
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.learning_rate = 0.05;
  const auto r = train<double>(x, std::span<const int>(y), 2, cfg);
  CHECK(predict_batch(r.params, x) == y);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  CHECK(r.epochs_run <= 200);

  Eigen::MatrixXd xor_x(2, 4);
  xor_x << 0, 0, 1, 1,  //
      0, 1, 0, 1;
  const std::vector<int> xor_y{0, 1, 1, 0};
  cfg.hidden = 16;
  const auto xr = train<double>(xor_x, std::span<const int>(xor_y), 2, cfg);
  CHECK(predict_batch(xr.params, xor_x) == xor_y);
}

TEST_CASE("training on shuffled-label noise still lowers the loss") {
  const auto x = random_inputs(10, 64, 4);
  const auto y = random_labels(64, 3, 5);
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.max_epochs = 30;
  const auto r = train<double>(x, std::span<const int>(y), 3, cfg);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front());
}

TEST_CASE("zero epochs returns the initialization") {
  const auto x = random_inputs(3, 5, 1);
  const std::vector<int> y{0, 1, 0, 1, 0};
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.max_epochs = 0;
  cfg.seed = 12;
  const auto r = train<double>(x, std::span<const int>(y), 2, cfg);
  CHECK(r.epochs_run == 0);
  CHECK(r.params == glorot_init<double>(3, 4, 2, 12));
  CHECK(r.params.b1.isZero());
  CHECK(r.params.b2.isZero());
  const double limit = std::sqrt(6.0 / (4 + 3));
  CHECK(r.params.w1.cwiseAbs().maxCoeff() <= limit);
}

TEST_CASE("training is bitwise deterministic for a seed") {
  const auto x = random_inputs(6, 40, 8);
  const auto y = random_labels(40, 3, 9);
  TrainConfig cfg;
  cfg.hidden = 16;
  cfg.max_epochs = 15;
  cfg.seed = 3;
  const auto a = train<double>(x, std::span<const int>(y), 3, cfg);
  const auto b = train<double>(x, std::span<const int>(y), 3, cfg);
  CHECK(a.params == b.params);
  CHECK(a.epoch_losses == b.epoch_losses);
  cfg.seed = 4;
  CHECK_FALSE(train<double>(x, std::span<const int>(y), 3, cfg).params == a.params);
}

TEST_CASE("single precision instantiation trains too") {
  Eigen::MatrixXf x(1, 4);
  x << -2, -1, 1, 2;
  const std::vector<int> y{0, 0, 1, 1};
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.learning_rate = 0.05;
  const auto r = train<float>(x, std::span<const int>(y), 2, cfg);
  CHECK(predict_batch(r.params, x) == y);
}

TEST_CASE("early stopping") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 6);
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  TrainConfig cfg;
  cfg.hidden = 3;
  cfg.patience = 3;
  cfg.tolerance = 0.5;
  const auto r = train<double>(x, std::span<const int>(y), 2, cfg);
  CHECK(r.stopped_early);
  CHECK(r.epochs_run == 4);  // first epoch sets the best, then three stale ones
}

TEST_CASE("config and input validation") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 2);
  const std::vector<int> y{0, 1};
  TrainConfig bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train<double>(x, std::span<const int>(y), 2, bad), ConfigError);
  bad = TrainConfig{};
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const std::vector<int> out_of_range{0, 2};
  CHECK_THROWS_AS(train<double>(x, std::span<const int>(out_of_range), 2, TrainConfig{}), DataError);
  const std::vector<int> short_labels{0};
  CHECK_THROWS_AS(train<double>(x, std::span<const int>(short_labels), 2, TrainConfig{}), DataError);
}

TEST_CASE("parameter artifacts round-trip") {
  const auto p = random_params(3, 4, 2, 17);
  CHECK(params_from_json(params_to_json(p)) == p);
  const auto path = testing::scratch_dir("mlp") / "model.json";
  save_params(p, path);
  CHECK(load_params(path) == p);
  CHECK_THROWS(params_from_json(R"({"format":"other"})"));
}

TEST_CASE("trained model accuracy is preserved after reload") {
  const auto x = random_inputs(4, 30, 21);
  std::vector<int> y(30);
  for (int j = 0; j < 30; ++j) y[j] = x(0, j) > 0;
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.learning_rate = 0.02;
  const auto r = train<double>(x, std::span<const int>(y), 2, cfg);
  CHECK(accuracy(predict_batch(r.params, x), y) >= 0.9);
  CHECK(predict_batch(params_from_json(params_to_json(r.params)), x) == predict_batch(r.params, x));
}
