#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tabvec/error.hpp"
#include "tabvec/random.hpp"

namespace tabvec {

/// One-hidden-layer perceptron: softmax(W2 tanh(W1 x + b1) + b2).
template <typename Scalar>
struct MlpParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;  // hidden x input
  Vector b1;
  Matrix w2;  // classes x hidden
  Vector b2;

  MlpParams() = default;
  MlpParams(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index classes)
      : w1(Matrix::Zero(hidden, input_dim)),
        b1(Vector::Zero(hidden)),
        w2(Matrix::Zero(classes, hidden)),
        b2(Vector::Zero(classes)) {}

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }
  Eigen::Index classes() const { return w2.rows(); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }

  /// Flat view order: w1, b1, w2, b2 (each column-major).
  Scalar& flat(Eigen::Index i) {
    if (i < w1.size()) return w1.data()[i];
    i -= w1.size();
    if (i < b1.size()) return b1.data()[i];
    i -= b1.size();
    if (i < w2.size()) return w2.data()[i];
    return b2.data()[i - w2.size()];
  }
  Scalar flat(Eigen::Index i) const { return const_cast<MlpParams&>(*this).flat(i); }

  bool operator==(const MlpParams& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

using MlpParamsd = MlpParams<double>;

struct TrainConfig {
  int hidden = 500;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  int patience = 10;
  double tolerance = 1e-4;

  /// Throws ConfigError when a field is out of range. max_epochs may be 0.
  void validate() const {
    if (hidden < 1 || learning_rate <= 0 || epsilon <= 0 || batch_size < 1 || max_epochs < 0 ||
        patience < 1 || tolerance < 0)
      throw ConfigError("train config: hidden, learning_rate, epsilon, batch_size and patience must be positive");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
      throw ConfigError("train config: beta1 and beta2 must lie in (0, 1)");
  }
};

namespace detail {

template <typename Derived>
auto column_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

template <typename Scalar>
Eigen::SparseMatrix<Scalar> gather_columns(const Eigen::SparseMatrix<Scalar>& m,
                                           std::span<const Eigen::Index> columns) {
  Eigen::SparseMatrix<Scalar> out(m.rows(), static_cast<Eigen::Index>(columns.size()));
  Eigen::Index nnz = 0;
  for (auto j : columns) nnz += m.col(j).nonZeros();
  out.reserve(nnz);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    out.startVec(col);
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(m, columns[k]); it; ++it)
      out.insertBack(it.row(), col) = it.value();
  }
  out.finalize();
  return out;
}

}  // namespace detail

/// Class probabilities for each column of `inputs`.
template <typename Scalar, typename Derived>
typename MlpParams<Scalar>::Matrix forward_batch(const MlpParams<Scalar>& params,
                                                 const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != params.input_dim())
    throw DataError("mlp: input dim " + std::to_string(inputs.rows()) + " does not match " +
                    std::to_string(params.input_dim()));
  typename MlpParams<Scalar>::Matrix hidden =
      ((params.w1 * inputs).colwise() + params.b1).array().tanh();
  return detail::column_softmax((params.w2 * hidden).colwise() + params.b2);
}

template <typename Scalar>
typename MlpParams<Scalar>::Vector forward(const MlpParams<Scalar>& params,
                                           const typename MlpParams<Scalar>::Vector& x) {
  return forward_batch(params, x);
}

/// Mean negative log-probability of the true classes.
template <typename Scalar, typename Derived>
Scalar loss(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
            std::span<const int> labels) {
  const auto probs = forward_batch(params, inputs);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) total -= std::log(probs(labels[j], j));
  return total / static_cast<Scalar>(probs.cols());
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss = 0;
  MlpParams<Scalar> gradient;
};

/// Cross-entropy loss and its analytic gradient by backpropagation.
/// Accepts dense or sparse inputs.
template <typename Scalar, typename Derived>
LossAndGradient<Scalar> loss_and_gradient(const MlpParams<Scalar>& params,
                                          const Eigen::EigenBase<Derived>& batch,
                                          std::span<const int> labels) {
  using Matrix = typename MlpParams<Scalar>::Matrix;
  const auto& inputs = batch.derived();
  const auto n = inputs.cols();
  const Matrix hidden = ((params.w1 * inputs).colwise() + params.b1).array().tanh();
  Matrix delta = detail::column_softmax((params.w2 * hidden).colwise() + params.b2);

  LossAndGradient<Scalar> out;
  for (Eigen::Index j = 0; j < n; ++j) {
    out.loss -= std::log(delta(labels[j], j));
    delta(labels[j], j) -= 1;
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(n);
  out.loss *= scale;
  delta *= scale;

  out.gradient.w2.noalias() = delta * hidden.transpose();
  out.gradient.b2 = delta.rowwise().sum();
  const Matrix hidden_delta =
      (params.w2.transpose() * delta).array() * (Scalar(1) - hidden.array().square());
  if constexpr (std::is_base_of_v<Eigen::SparseMatrixBase<Derived>, Derived>) {
    out.gradient.w1.setZero(params.hidden(), params.input_dim());
    for (Eigen::Index j = 0; j < n; ++j)
      for (typename Derived::InnerIterator it(inputs, j); it; ++it)
        out.gradient.w1.col(it.row()) += it.value() * hidden_delta.col(j);
  } else {
    out.gradient.w1.noalias() = hidden_delta * inputs.transpose();
  }
  out.gradient.b1 = hidden_delta.rowwise().sum();
  return out;
}

/// argmax of the class probabilities; ties go to the lowest index.
template <typename Scalar>
int argmax(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& probs) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return static_cast<int>(best);
}

template <typename Scalar>
int predict(const MlpParams<Scalar>& params, const typename MlpParams<Scalar>::Vector& x) {
  return argmax<Scalar>(forward(params, x));
}

template <typename Scalar, typename Derived>
std::vector<int> predict_batch(const MlpParams<Scalar>& params,
                               const Eigen::MatrixBase<Derived>& inputs) {
  const auto probs = forward_batch(params, inputs);
  std::vector<int> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index j = 0; j < probs.cols(); ++j) out[j] = argmax<Scalar>(probs.col(j));
  return out;
}

/// Glorot-uniform weights, zero biases.
template <typename Scalar>
MlpParams<Scalar> glorot_init(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index classes,
                              std::uint64_t seed) {
  MlpParams<Scalar> p(input_dim, hidden, classes);
  Rng rng(mix_seed(seed, 0x6d6c70));
  auto fill = [&rng](auto& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = static_cast<Scalar>((2.0 * uniform_unit(rng) - 1.0) * limit);
  };
  fill(p.w1);
  fill(p.w2);
  return p;
}

inline constexpr double kSparseInputDensity = 0.1;

template <typename Scalar>
struct TrainResult {
  MlpParams<Scalar> params;
  std::vector<Scalar> epoch_losses;
  int epochs_run = 0;
  bool stopped_early = false;
};

/// Adam on mini-batch cross-entropy. Batch order is reshuffled each epoch
/// from the seed. Stops after max_epochs, or once the epoch loss has failed
/// to improve on the best loss by `tolerance` for `patience` epochs.
/// Inputs with at most `kSparseInputDensity` nonzeros (TF-IDF) take a
/// sparse product path; the update rule is the same.
template <typename Scalar, typename Derived>
TrainResult<Scalar> train(const Eigen::MatrixBase<Derived>& inputs, std::span<const int> labels,
                          int classes, const TrainConfig& cfg) {
  using Matrix = typename MlpParams<Scalar>::Matrix;
  cfg.validate();
  const auto n = inputs.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size())
    throw DataError("mlp train: need a non-empty input set with one label per column");
  if (classes < 1) throw DataError("mlp train: class count must be positive");
  for (int y : labels)
    if (y < 0 || y >= classes) throw DataError("mlp train: label out of range");

  TrainResult<Scalar> result;
  result.params = glorot_init<Scalar>(inputs.rows(), cfg.hidden, classes, cfg.seed);
  MlpParams<Scalar>& p = result.params;

  MlpParams<Scalar> m(p.input_dim(), p.hidden(), p.classes());
  MlpParams<Scalar> v = m;

  const auto nonzeros = (inputs.array() != Scalar(0)).count();
  const bool sparse = static_cast<double>(nonzeros) <= kSparseInputDensity * static_cast<double>(inputs.size());
  Eigen::SparseMatrix<Scalar> sparse_inputs;
  if (sparse) sparse_inputs = inputs.sparseView();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(mix_seed(cfg.seed, 0x6261746368));

  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  Scalar b1_power = 1, b2_power = 1;

  auto adam = [&](auto& param, auto& m1, auto& m2, const auto& grad, Scalar corr1, Scalar corr2) {
    m1 = b1 * m1 + (1 - b1) * grad;
    m2 = b2 * m2 + (1 - b2) * grad.cwiseAbs2();
    param.array() -= lr * (m1.array() / corr1) / ((m2.array() / corr2).sqrt() + eps);
  };


  Scalar best = std::numeric_limits<Scalar>::infinity();
  int stale = 0;
  std::vector<int> batch_labels;
  Matrix batch;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    fisher_yates(order, rng);
    Scalar epoch_loss = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(n, start + cfg.batch_size);
      const std::span<const Eigen::Index> idx(order.data() + start, static_cast<std::size_t>(stop - start));
      batch_labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labels[idx[i]];

      LossAndGradient<Scalar> step;
      if (sparse) {
        step = loss_and_gradient(p, detail::gather_columns(sparse_inputs, idx), batch_labels);
      } else {
        batch = inputs(Eigen::all, idx);
        step = loss_and_gradient(p, batch, batch_labels);
      }
      if (!std::isfinite(step.loss) || !step.gradient.all_finite())
        throw Error("mlp train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                    " (batch starting at " + std::to_string(start) + ")");
      epoch_loss += step.loss * static_cast<Scalar>(stop - start);

      b1_power *= b1;
      b2_power *= b2;
      const Scalar c1 = 1 - b1_power, c2 = 1 - b2_power;
      adam(p.w1, m.w1, v.w1, step.gradient.w1, c1, c2);
      adam(p.b1, m.b1, v.b1, step.gradient.b1, c1, c2);
      adam(p.w2, m.w2, v.w2, step.gradient.w2, c1, c2);
      adam(p.b2, m.b2, v.b2, step.gradient.b2, c1, c2);
    }
    epoch_loss /= static_cast<Scalar>(n);
    result.epoch_losses.push_back(epoch_loss);
    result.epochs_run = epoch + 1;

    if (epoch_loss > best - static_cast<Scalar>(cfg.tolerance)) {
      if (++stale >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    } else {
      stale = 0;
    }
    best = std::min(best, epoch_loss);
  }
  return result;
}

/// Largest relative error |a - n| / max(|a| + |n|, 1e-12) between the
/// analytic gradient `analytic` and central differences with step h, over
/// `samples` parameters drawn from the seed (all parameters when 0).
template <typename Scalar, typename Derived>
Scalar gradient_check(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
                      std::span<const int> labels, const MlpParams<Scalar>& analytic, Scalar h,
                      std::size_t samples = 0, std::uint64_t seed = 0) {
  std::vector<Eigen::Index> which(static_cast<std::size_t>(params.parameter_count()));
  std::iota(which.begin(), which.end(), Eigen::Index{0});
  if (samples > 0 && samples < which.size()) {
    Rng rng(mix_seed(seed, 0x6663));
    fisher_yates(which, rng);
    which.resize(samples);
  }
  MlpParams<Scalar> probe = params;
  Scalar worst = 0;
  for (Eigen::Index i : which) {
    const Scalar saved = probe.flat(i);
    probe.flat(i) = saved + h;
    const Scalar up = loss(probe, inputs, labels);
    probe.flat(i) = saved - h;
    const Scalar down = loss(probe, inputs, labels);
    probe.flat(i) = saved;
    const Scalar numeric = (up - down) / (2 * h);
    const Scalar a = analytic.flat(i);
    const Scalar denom = std::max<Scalar>(std::abs(a) + std::abs(numeric), Scalar(1e-12));
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

/// Gradient check of the backpropagation gradient itself.
template <typename Scalar, typename Derived>
Scalar gradient_check(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
                      std::span<const int> labels, Scalar h, std::size_t samples = 0,
                      std::uint64_t seed = 0) {
  const auto analytic = loss_and_gradient(params, inputs, labels).gradient;
  return gradient_check(params, inputs, labels, analytic, h, samples, seed);
}

/// JSON artifact: {"format":"tabvec-mlp","version":1,"input_dim","hidden",
/// "classes","w1","b1","w2","b2"} with matrices flattened row-major.
void save_params(const MlpParamsd& params, const std::filesystem::path& path);
MlpParamsd load_params(const std::filesystem::path& path);
std::string params_to_json(const MlpParamsd& params);
MlpParamsd params_from_json(const std::string& text);

}  // namespace tabvec
