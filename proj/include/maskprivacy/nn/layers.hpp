#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "maskprivacy/nn/tensor.hpp"

namespace maskprivacy::nn {

template <typename Scalar>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) = 0;
  /// Gradient w.r.t. the input of the most recent forward; accumulates into
  /// parameter gradients.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad) = 0;
  virtual void parameters(std::vector<Param<Scalar>*>&) {}
  /// Non-trainable state that must be checkpointed (norm running stats).
  virtual void buffers(std::vector<Matrix<Scalar>*>&) {}
};

/// Convolution without bias. Weights are Cout x (k*k*Cin) with the input
/// channel fastest so im2col copies whole pixel columns.
template <typename Scalar>
class Conv2d final : public Module<Scalar> {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad) {
    weight_.resize(out, static_cast<Eigen::Index>(kernel) * kernel * in);
    // He-normal, fan-out mode
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (static_cast<double>(out) * kernel * kernel)));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = static_cast<Scalar>(dist(rng));
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    if (x.channels() != in_) throw std::invalid_argument("Conv2d: channel mismatch");
    in_h_ = x.h;
    in_w_ = x.w;
    batch_ = x.n;
    const int ho = out_size(x.h), wo = out_size(x.w);
    if (pointwise()) {
      cols_ = x.data;
    } else {
      im2col(x, ho, wo);
    }
    return Tensor<Scalar>(weight_.value * cols_, x.n, ho, wo);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    weight_.grad.noalias() += g.data * cols_.transpose();
    Matrix<Scalar> dcols = weight_.value.transpose() * g.data;
    if (pointwise()) return Tensor<Scalar>(std::move(dcols), batch_, in_h_, in_w_);
    return col2im(dcols, g.h, g.w);
  }

  void parameters(std::vector<Param<Scalar>*>& out) override { out.push_back(&weight_); }

  Param<Scalar>& weight() { return weight_; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void im2col(const Tensor<Scalar>& x, int ho, int wo) {
    const Eigen::Index rows = static_cast<Eigen::Index>(k_) * k_ * in_;
    cols_.resize(rows, static_cast<Eigen::Index>(x.n) * ho * wo);
    Eigen::Index j = 0;
    for (int b = 0; b < x.n; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++j) {
          Eigen::Index r = 0;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx, r += in_) {
              const int ix = ox * stride_ - pad_ + kx;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w)
                cols_.col(j).segment(r, in_).setZero();
              else
                cols_.col(j).segment(r, in_) = x.data.col((static_cast<Eigen::Index>(b) * x.h + iy) * x.w + ix);
            }
          }
        }
  }

  Tensor<Scalar> col2im(const Matrix<Scalar>& dcols, int ho, int wo) const {
    Tensor<Scalar> dx(in_, batch_, in_h_, in_w_);
    Eigen::Index j = 0;
    for (int b = 0; b < batch_; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++j) {
          Eigen::Index r = 0;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx, r += in_) {
              const int ix = ox * stride_ - pad_ + kx;
              if (iy < 0 || iy >= in_h_ || ix < 0 || ix >= in_w_) continue;
              dx.data.col((static_cast<Eigen::Index>(b) * in_h_ + iy) * in_w_ + ix) += dcols.col(j).segment(r, in_);
            }
          }
        }
    return dx;
  }

  int in_, out_, k_, stride_, pad_;
  Param<Scalar> weight_;
  Matrix<Scalar> cols_;
  int in_h_ = 0, in_w_ = 0, batch_ = 0;
};

/// Per-channel batch normalisation over N*H*W. Training uses batch
/// statistics and updates running estimates; evaluation uses the estimates.
template <typename Scalar>
class BatchNorm final : public Module<Scalar> {
 public:
  explicit BatchNorm(int channels, Scalar gamma_init = Scalar(1), Scalar momentum = Scalar(0.1),
                     Scalar eps = Scalar(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma_.resize(channels, 1);
    beta_.resize(channels, 1);
    gamma_.value.setConstant(gamma_init);
    gamma_.decay = beta_.decay = false;
    running_mean_ = Matrix<Scalar>::Zero(channels, 1);
    running_var_ = Matrix<Scalar>::Ones(channels, 1);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
    const auto m = static_cast<Scalar>(x.data.cols());
    Vector<Scalar> mean, var;
    if (train) {
      mean = x.data.rowwise().mean();
      var = (x.data.colwise() - mean).array().square().rowwise().sum() / m;
      const Scalar unbias = m > 1 ? m / (m - 1) : Scalar(1);
      running_mean_ = (1 - momentum_) * running_mean_ + momentum_ * mean;
      running_var_ = (1 - momentum_) * running_var_ + momentum_ * unbias * var;
    } else {
      mean = running_mean_.col(0);
      var = running_var_.col(0);
    }
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    train_ = train;
    xhat_ = (x.data.colwise() - mean).array().colwise() * inv_std_.array();
    Matrix<Scalar> y = (xhat_.array().colwise() * gamma_.value.col(0).array()).colwise() + beta_.value.col(0).array();
    return Tensor<Scalar>(std::move(y), x.n, x.h, x.w);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    gamma_.grad.col(0) += (g.data.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad.col(0) += g.data.rowwise().sum();
    Matrix<Scalar> dxhat = g.data.array().colwise() * gamma_.value.col(0).array();
    if (!train_) {
      Matrix<Scalar> dx = dxhat.array().colwise() * inv_std_.array();
      return Tensor<Scalar>(std::move(dx), g.n, g.h, g.w);
    }
    const auto m = static_cast<Scalar>(g.data.cols());
    const Vector<Scalar> sum_d = dxhat.rowwise().sum();
    const Vector<Scalar> sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum();
    Matrix<Scalar> dx = ((dxhat * m).colwise() - sum_d - (xhat_.array().colwise() * sum_dx.array()).matrix());
    dx = dx.array().colwise() * (inv_std_.array() / m);
    return Tensor<Scalar>(std::move(dx), g.n, g.h, g.w);
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void buffers(std::vector<Matrix<Scalar>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  Scalar momentum_, eps_;
  Param<Scalar> gamma_, beta_;
  Matrix<Scalar> running_mean_, running_var_;
  Matrix<Scalar> xhat_;
  Vector<Scalar> inv_std_;
  bool train_ = true;
};

template <typename Scalar>
class ReLU final : public Module<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    mask_ = (x.data.array() > Scalar(0)).template cast<Scalar>();
    return Tensor<Scalar>(x.data.cwiseMax(Scalar(0)), x.n, x.h, x.w);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    return Tensor<Scalar>(g.data.cwiseProduct(mask_), g.n, g.h, g.w);
  }

 private:
  Matrix<Scalar> mask_;
};

/// 3x3 max pooling, stride 2, padding 1.
template <typename Scalar>
class MaxPool final : public Module<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    const int ho = (x.h + 2 - 3) / 2 + 1, wo = (x.w + 2 - 3) / 2 + 1;
    in_n_ = x.n;
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<Scalar> y(x.channels(), x.n, ho, wo);
    argmax_.assign(static_cast<std::size_t>(y.data.size()), 0);
    Eigen::Index j = 0;
    for (int b = 0; b < x.n; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++j) {
          for (int c = 0; c < x.channels(); ++c) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            Eigen::Index best_idx = 0;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * 2 - 1 + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * 2 - 1 + kx;
                if (ix < 0 || ix >= x.w) continue;
                const Eigen::Index col = (static_cast<Eigen::Index>(b) * x.h + iy) * x.w + ix;
                if (x.data(c, col) > best) {
                  best = x.data(c, col);
                  best_idx = col;
                }
              }
            }
            y.data(c, j) = best;
            argmax_[static_cast<std::size_t>(j * x.channels() + c)] = best_idx;
          }
        }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.channels(), in_n_, in_h_, in_w_);
    for (Eigen::Index j = 0; j < g.data.cols(); ++j)
      for (int c = 0; c < g.channels(); ++c)
        dx.data(c, argmax_[static_cast<std::size_t>(j * g.channels() + c)]) += g.data(c, j);
    return dx;
  }

 private:
  std::vector<Eigen::Index> argmax_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Mean over H*W; output is C x N with h = w = 1.
template <typename Scalar>
class GlobalAvgPool final : public Module<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    in_h_ = x.h;
    in_w_ = x.w;
    const Eigen::Index p = x.pixels();
    Matrix<Scalar> y(x.channels(), x.n);
    for (int b = 0; b < x.n; ++b) y.col(b) = x.data.middleCols(b * p, p).rowwise().mean();
    return Tensor<Scalar>(std::move(y), x.n, 1, 1);
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> dx(g.channels(), g.n, in_h_, in_w_);
    const Eigen::Index p = dx.pixels();
    for (int b = 0; b < g.n; ++b)
      dx.data.middleCols(b * p, p) = (g.data.col(b) / static_cast<Scalar>(p)).replicate(1, p);
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

/// Fully connected layer on C x N inputs (h = w = 1).
template <typename Scalar>
class Linear final : public Module<Scalar> {
 public:
  Linear(int in, int out, std::mt19937_64& rng) {
    weight_.resize(out, in);
    bias_.resize(out, 1);
    bias_.decay = false;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = static_cast<Scalar>(dist(rng));
    for (Eigen::Index i = 0; i < bias_.value.size(); ++i) bias_.value.data()[i] = static_cast<Scalar>(dist(rng));
  }

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    if (x.h != 1 || x.w != 1 || x.channels() != in_features())
      throw std::invalid_argument("Linear: expected " + std::to_string(in_features()) + " x N features");
    x_ = x.data;
    Matrix<Scalar> y = (weight_.value * x.data).colwise() + bias_.value.col(0);
    return Tensor<Scalar>(std::move(y), x.n, 1, 1);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    weight_.grad.noalias() += g.data * x_.transpose();
    bias_.grad.col(0) += g.data.rowwise().sum();
    return Tensor<Scalar>(weight_.value.transpose() * g.data, g.n, 1, 1);
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }

 private:
  Param<Scalar> weight_, bias_;
  Matrix<Scalar> x_;
};

template <typename Scalar>
class Sequential final : public Module<Scalar> {
 public:
  template <typename M, typename... Args>
  M& add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    auto& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
    Tensor<Scalar> y = x;
    for (auto& l : layers_) y = l->forward(y, train);
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    Tensor<Scalar> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }
  void parameters(std::vector<Param<Scalar>*>& out) override {
    for (auto& l : layers_) l->parameters(out);
  }
  void buffers(std::vector<Matrix<Scalar>*>& out) override {
    for (auto& l : layers_) l->buffers(out);
  }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Module<Scalar>>> layers_;
};

}  // namespace maskprivacy::nn
