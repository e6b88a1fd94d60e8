#pragma once

#include <cassert>
#include <random>

#include <Eigen/Core>

namespace maskprivacy::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Batch of feature maps stored channel-major: `data` is C x (N*H*W) with
/// column index (n*H + y)*W + x. A 1x1 convolution is then one GEMM and
/// per-channel statistics are row reductions.
template <typename Scalar>
struct Tensor {
  int n = 0, h = 0, w = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(int channels, int batch, int height, int width)
      : n(batch), h(height), w(width), data(Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(batch) * height * width)) {}
  Tensor(Matrix<Scalar> m, int batch, int height, int width) : n(batch), h(height), w(width), data(std::move(m)) {
    assert(data.cols() == static_cast<Eigen::Index>(batch) * height * width);
  }

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(h) * w; }
  Scalar& at(int c, int b, int y, int x) { return data(c, (static_cast<Eigen::Index>(b) * h + y) * w + x); }
  Scalar at(int c, int b, int y, int x) const { return data(c, (static_cast<Eigen::Index>(b) * h + y) * w + x); }
};

/// Trainable tensor with its gradient and optimizer momentum.
template <typename Scalar>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> velocity;
  bool decay = true;  // weight decay applies (off for norm affine terms)

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    velocity.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

}  // namespace maskprivacy::nn
