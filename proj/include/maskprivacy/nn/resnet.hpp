#pragma once

#include <array>
#include <memory>
#include <random>
#include <vector>

#include "maskprivacy/nn/layers.hpp"

namespace maskprivacy::nn {

struct ResNetConfig {
  int base_width = 64;                    // channels of the stem; stages use 1x, 2x, 4x, 8x
  std::array<int, 4> blocks = {3, 4, 6, 3};  // 50 weighted layers with the stem and head
  int input_size = 224;

  int feature_dim() const { return base_width * 8 * 4; }
  int depth() const { return 2 + 3 * (blocks[0] + blocks[1] + blocks[2] + blocks[3]); }
  bool operator==(const ResNetConfig&) const = default;
};

/// 1x1 reduce, 3x3 (strided), 1x1 expand x4, plus projection shortcut when
/// the shape changes. The last norm starts at zero so every block begins as
/// an identity map.
template <typename Scalar>
class Bottleneck final : public Module<Scalar> {
 public:
  static constexpr int kExpansion = 4;

  Bottleneck(int in, int mid, int stride, std::mt19937_64& rng)
      : conv1_(in, mid, 1, 1, 0, rng),
        bn1_(mid),
        conv2_(mid, mid, 3, stride, 1, rng),
        bn2_(mid),
        conv3_(mid, mid * kExpansion, 1, 1, 0, rng),
        bn3_(mid * kExpansion, Scalar(0)) {
    if (stride != 1 || in != mid * kExpansion) {
      shortcut_conv_ = std::make_unique<Conv2d<Scalar>>(in, mid * kExpansion, 1, stride, 0, rng);
      shortcut_bn_ = std::make_unique<BatchNorm<Scalar>>(mid * kExpansion);
    }
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
    auto y = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    y = relu2_.forward(bn2_.forward(conv2_.forward(y, train), train), train);
    y = bn3_.forward(conv3_.forward(y, train), train);
    if (shortcut_conv_)
      y.data += shortcut_bn_->forward(shortcut_conv_->forward(x, train), train).data;
    else
      y.data += x.data;
    return relu_out_.forward(y, train);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& g) override {
    auto d = relu_out_.backward(g);
    Tensor<Scalar> dx = shortcut_conv_ ? shortcut_conv_->backward(shortcut_bn_->backward(d)) : d;
    auto dm = conv3_.backward(bn3_.backward(d));
    dm = conv2_.backward(bn2_.backward(relu2_.backward(dm)));
    dm = conv1_.backward(bn1_.backward(relu1_.backward(dm)));
    dx.data += dm.data;
    return dx;
  }

  void parameters(std::vector<Param<Scalar>*>& out) override {
    conv1_.parameters(out);
    bn1_.parameters(out);
    conv2_.parameters(out);
    bn2_.parameters(out);
    conv3_.parameters(out);
    bn3_.parameters(out);
    if (shortcut_conv_) {
      shortcut_conv_->parameters(out);
      shortcut_bn_->parameters(out);
    }
  }
  void buffers(std::vector<Matrix<Scalar>*>& out) override {
    bn1_.buffers(out);
    bn2_.buffers(out);
    bn3_.buffers(out);
    if (shortcut_bn_) shortcut_bn_->buffers(out);
  }

 private:
  Conv2d<Scalar> conv1_;
  BatchNorm<Scalar> bn1_;
  ReLU<Scalar> relu1_;
  Conv2d<Scalar> conv2_;
  BatchNorm<Scalar> bn2_;
  ReLU<Scalar> relu2_;
  Conv2d<Scalar> conv3_;
  BatchNorm<Scalar> bn3_;
  std::unique_ptr<Conv2d<Scalar>> shortcut_conv_;
  std::unique_ptr<BatchNorm<Scalar>> shortcut_bn_;
  ReLU<Scalar> relu_out_;
};

/// Bottleneck residual backbone: 7x7/2 stem, 3x3/2 max pool, four stages,
/// global average pooling. Input 3 x (N*S*S); output feature_dim x N.
template <typename Scalar>
class ResNet final : public Module<Scalar> {
 public:
  ResNet(const ResNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const int w = cfg.base_width;
    body_.template add<Conv2d<Scalar>>(3, w, 7, 2, 3, rng);
    body_.template add<BatchNorm<Scalar>>(w);
    body_.template add<ReLU<Scalar>>();
    body_.template add<MaxPool<Scalar>>();
    int in = w;
    for (int stage = 0; stage < 4; ++stage) {
      const int mid = w << stage;
      for (int b = 0; b < cfg.blocks[stage]; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        body_.template add<Bottleneck<Scalar>>(in, mid, stride, rng);
        in = mid * Bottleneck<Scalar>::kExpansion;
      }
    }
    body_.template add<GlobalAvgPool<Scalar>>();
  }

  const ResNetConfig& config() const { return cfg_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override { return body_.forward(x, train); }
  Tensor<Scalar> backward(const Tensor<Scalar>& g) override { return body_.backward(g); }
  void parameters(std::vector<Param<Scalar>*>& out) override { body_.parameters(out); }
  void buffers(std::vector<Matrix<Scalar>*>& out) override { body_.buffers(out); }

 private:
  ResNetConfig cfg_;
  Sequential<Scalar> body_;
};

}  // namespace maskprivacy::nn
