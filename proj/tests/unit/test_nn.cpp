#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "maskprivacy/nn/layers.hpp"
#include "maskprivacy/nn/loss.hpp"
#include "maskprivacy/nn/resnet.hpp"

using namespace maskprivacy::nn;
using Md = Matrix<double>;

namespace {

Tensor<double> random_tensor(int c, int n, int h, int w, std::mt19937_64& rng) {
  Tensor<double> t(c, n, h, w);
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = d(rng);
  return t;
}

Md random_like(const Md& m, std::mt19937_64& rng) {
  Md r(m.rows(), m.cols());
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = d(rng);
  return r;
}

// Compares analytic input and parameter gradients of sum(r * f(x)) with
// central differences on a sample of coordinates. A coordinate where two
// step sizes disagree sits on a ReLU or max-pool kink and is skipped; at
// most a fifth of the probes may be skipped.
void check_gradients(Module<double>& m, Tensor<double> x, std::mt19937_64& rng, double tol = 1e-5) {
  const auto y = m.forward(x, true);
  const Md r = random_like(y.data, rng);
  std::vector<Param<double>*> params;
  m.parameters(params);
  for (auto* p : params) p->zero_grad();
  const auto dx = m.backward(Tensor<double>(r, y.n, y.h, y.w));

  auto objective = [&](const Tensor<double>& in) { return (m.forward(in, true).data.array() * r.array()).sum(); };
  int probes = 0, skipped = 0;
  // derivative along one coordinate of `v`, at two step sizes
  auto probe = [&](double& v, double analytic) {
    const double keep = v;
    double est[2];
    for (int s = 0; s < 2; ++s) {
      const double h = s == 0 ? 1e-6 : 1e-7;
      v = keep + h;
      const double fp = objective(x);
      v = keep - h;
      const double fm = objective(x);
      est[s] = (fp - fm) / (2 * h);
    }
    v = keep;
    ++probes;
    const double scale = std::max(1.0, std::abs(est[0]));
    if (std::abs(est[0] - est[1]) > tol * scale) {
      ++skipped;
      return;
    }
    CHECK(std::abs(est[0] - analytic) <= tol * scale);
  };
  std::uniform_int_distribution<Eigen::Index> pick(0, x.data.size() - 1);
  for (int k = 0; k < 20; ++k) {
    const auto i = pick(rng);
    probe(x.data.data()[i], dx.data.data()[i]);
  }
  for (auto* p : params) {
    std::uniform_int_distribution<Eigen::Index> pp(0, p->value.size() - 1);
    for (int k = 0; k < 5; ++k) {
      const auto i = pp(rng);
      probe(p->value.data()[i], p->grad.data()[i]);
    }
  }
  CHECK(skipped * 5 <= probes);
}

void randomize_params(Module<double>& m, std::mt19937_64& rng) {
  std::vector<Param<double>*> params;
  m.parameters(params);
  std::normal_distribution<double> d(0.0, 0.5);
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += d(rng);
}

}  // namespace

TEST_CASE("convolution gradients") {
  std::mt19937_64 rng(1);
  for (auto [k, s, pad] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0}, std::tuple{7, 2, 3}}) {
    Conv2d<double> conv(3, 4, k, s, pad, rng);
    check_gradients(conv, random_tensor(3, 2, 9, 9, rng), rng);
  }
}

TEST_CASE("convolution matches direct sum") {
  std::mt19937_64 rng(2);
  Conv2d<double> conv(2, 3, 3, 2, 1, rng);
  auto x = random_tensor(2, 1, 5, 5, rng);
  auto y = conv.forward(x, false);
  std::vector<Param<double>*> p;
  conv.parameters(p);
  const Md& w = p[0]->value;
  CHECK(y.h == 3);
  for (int oc = 0; oc < 3; ++oc)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double acc = 0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            for (int c = 0; c < 2; ++c) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 5) continue;
              acc += w(oc, (ky * 3 + kx) * 2 + c) * x.data(c, iy * 5 + ix);
            }
        CHECK(y.data(oc, oy * 3 + ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("batch norm, relu, pooling and linear gradients") {
  std::mt19937_64 rng(3);
  BatchNorm<double> bn(3);
  randomize_params(bn, rng);
  check_gradients(bn, random_tensor(3, 4, 3, 3, rng), rng);

  ReLU<double> relu;
  check_gradients(relu, random_tensor(2, 2, 4, 4, rng), rng);

  MaxPool<double> pool;
  check_gradients(pool, random_tensor(2, 2, 7, 7, rng), rng);

  GlobalAvgPool<double> gap;
  check_gradients(gap, random_tensor(3, 2, 4, 4, rng), rng);

  Linear<double> lin(6, 4, rng);
  check_gradients(lin, random_tensor(6, 5, 1, 1, rng), rng);
}

TEST_CASE("bottleneck and full network gradients") {
  std::mt19937_64 rng(4);
  Bottleneck<double> block(8, 2, 2, rng);
  randomize_params(block, rng);
  check_gradients(block, random_tensor(8, 3, 6, 6, rng), rng);

  ResNetConfig cfg;
  cfg.base_width = 2;
  cfg.blocks = {1, 1, 1, 1};
  cfg.input_size = 64;  // last stage still sees 2 x 2 maps, so batch statistics are not degenerate
  ResNet<double> net(cfg, rng);
  randomize_params(net, rng);
  check_gradients(net, random_tensor(3, 4, 64, 64, rng), rng, 1e-4);
}

TEST_CASE("network shapes") {
  std::mt19937_64 rng(5);
  ResNetConfig cfg;
  CHECK(cfg.depth() == 50);
  CHECK(cfg.feature_dim() == 2048);
  cfg.base_width = 4;
  cfg.input_size = 64;
  ResNet<float> net(cfg, rng);
  Tensor<float> x(3, 2, 64, 64);
  auto y = net.forward(x, false);
  CHECK(y.data.rows() == cfg.feature_dim());
  CHECK(y.data.cols() == 2);
}

TEST_CASE("loss functions") {
  Md logits(3, 2);
  logits << 1, 0, 2, 0, 3, 0;
  Md p = softmax(logits);
  CHECK(p.col(0).sum() == doctest::Approx(1.0));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0));
  auto ce = cross_entropy<double>(logits, {2, 0});
  const double expect = (-std::log(p(2, 0)) - std::log(p(0, 1))) / 2;
  CHECK(ce.loss == doctest::Approx(expect));

  std::mt19937_64 rng(6);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Md a = logits, b = logits;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double num = (cross_entropy<double>(a, {2, 0}).loss - cross_entropy<double>(b, {2, 0}).loss) / (2 * h);
    CHECK(ce.grad.data()[i] == doctest::Approx(num).epsilon(1e-6));
  }

  Md pred(1, 2);
  pred << 1.0, 3.0;
  auto mse = mean_squared_error<double>(pred, {0.0, 1.0});
  CHECK(mse.loss == doctest::Approx(2.5));
  CHECK(mse.grad(0, 0) == doctest::Approx(1.0));
  CHECK(mse.grad(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("sgd with momentum") {
  Param<double> p;
  p.resize(1, 1);
  p.value(0, 0) = 1.0;
  Sgd<double> opt({&p}, 0.1, 0.9);
  p.grad(0, 0) = 2.0;
  opt.step();
  CHECK(p.value(0, 0) == doctest::Approx(0.8));
  opt.step();  // v = 0.9 * 2 + 2
  CHECK(p.value(0, 0) == doctest::Approx(0.8 - 0.38));
}
