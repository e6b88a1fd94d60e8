#pragma once

#include <cmath>
#include <vector>

#include "maskprivacy/nn/tensor.hpp"

namespace maskprivacy::nn {

/// Column-wise softmax of a K x N logit matrix.
template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    p.col(j).array() -= p.col(j).maxCoeff();
    p.col(j) = p.col(j).array().exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Matrix<Scalar> grad;  // d loss / d input, same shape as the input
};

/// Mean cross-entropy over the batch; `labels[j]` is the class of column j.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Matrix<Scalar>& logits, const std::vector<int>& labels) {
  LossResult<Scalar> r;
  r.grad = softmax(logits);
  const auto n = static_cast<Scalar>(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    r.loss -= std::log(std::max(r.grad(y, j), std::numeric_limits<Scalar>::min()));
    r.grad(y, j) -= Scalar(1);
  }
  r.loss /= n;
  r.grad /= n;
  return r;
}

/// Mean squared error of a 1 x N prediction row.
template <typename Scalar>
LossResult<Scalar> mean_squared_error(const Matrix<Scalar>& pred, const std::vector<Scalar>& target) {
  LossResult<Scalar> r;
  r.grad = pred;
  const auto n = static_cast<Scalar>(pred.cols());
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    const Scalar e = pred(0, j) - target[static_cast<std::size_t>(j)];
    r.loss += e * e;
    r.grad(0, j) = 2 * e / n;
  }
  r.loss /= n;
  return r;
}

/// SGD with classical momentum and optional L2 weight decay:
/// v = mu * v + (g + wd * w); w -= lr * v.
template <typename Scalar>
class Sgd {
 public:
  Sgd(std::vector<Param<Scalar>*> params, Scalar lr, Scalar momentum = Scalar(0.9), Scalar weight_decay = Scalar(0))
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    for (auto* p : params_) {
      if (weight_decay_ > 0 && p->decay) p->grad += weight_decay_ * p->value;
      p->velocity = momentum_ * p->velocity + p->grad;
      p->value -= lr_ * p->velocity;
    }
  }

  Scalar learning_rate() const { return lr_; }

 private:
  std::vector<Param<Scalar>*> params_;
  Scalar lr_, momentum_, weight_decay_;
};

}  // namespace maskprivacy::nn
