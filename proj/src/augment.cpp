#include "maskprivacy/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace maskprivacy {
namespace {

PlanarImage clamp01(PlanarImage img) { return img.cwiseMax(0.0f).cwiseMin(1.0f); }

Eigen::RowVectorXf luma(const PlanarImage& img) {
  return 0.299f * img.row(0) + 0.587f * img.row(1) + 0.114f * img.row(2);
}

float sample(const PlanarImage& img, int c, int size, float x, float y) {
  if (x < -0.5f || y < -0.5f || x > size - 0.5f || y > size - 0.5f) return 0.0f;
  x = std::clamp(x, 0.0f, static_cast<float>(size - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(size - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, size - 1), y1 = std::min(y0 + 1, size - 1);
  const float wx = x - x0, wy = y - y0;
  auto px = [&](int xx, int yy) { return img(c, static_cast<Eigen::Index>(yy) * size + xx); };
  const float top = px(x0, y0) + (px(x1, y0) - px(x0, y0)) * wx;
  const float bot = px(x0, y1) + (px(x1, y1) - px(x0, y1)) * wx;
  return top + (bot - top) * wy;
}

PlanarImage convolve3(const PlanarImage& img, const std::array<float, 9>& k) {
  const int s = planar_size(img);
  PlanarImage out = img;
  // Border pixels keep their value, as PIL's smoothing filter does.
  for (int c = 0; c < 3; ++c)
    for (int y = 1; y + 1 < s; ++y)
      for (int x = 1; x + 1 < s; ++x) {
        float acc = 0.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += k[(dy + 1) * 3 + dx + 1] * img(c, static_cast<Eigen::Index>(y + dy) * s + x + dx);
        out(c, static_cast<Eigen::Index>(y) * s + x) = acc;
      }
  return out;
}

float uniform(std::mt19937_64& rng, float lo, float hi) {
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}
bool coin(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

}  // namespace

std::string to_string(AugmentPolicy p) {
  switch (p) {
    case AugmentPolicy::none: return "none";
    case AugmentPolicy::basic: return "basic";
    case AugmentPolicy::randaugment_default: return "randaugment";
  }
  return "?";
}

AugmentPolicy parse_augment(const std::string& s) {
  if (s == "none") return AugmentPolicy::none;
  if (s == "basic") return AugmentPolicy::basic;
  if (s == "randaugment" || s == "randaugment_default") return AugmentPolicy::randaugment_default;
  throw std::invalid_argument("unknown augmentation '" + s + "' (basic|randaugment)");
}

int planar_size(const PlanarImage& img) {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(img.cols()))));
  if (img.rows() != 3 || static_cast<Eigen::Index>(s) * s != img.cols())
    throw std::invalid_argument("planar image must be 3 x S*S");
  return s;
}

PlanarImage hflip(const PlanarImage& img) {
  const int s = planar_size(img);
  PlanarImage out(3, img.cols());
  for (int y = 0; y < s; ++y)
    out.middleCols(static_cast<Eigen::Index>(y) * s, s) =
        img.middleCols(static_cast<Eigen::Index>(y) * s, s).rowwise().reverse();
  return out;
}

PlanarImage resized_crop(const PlanarImage& img, float x0, float y0, float w, float h) {
  const int s = planar_size(img);
  PlanarImage out(3, img.cols());
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const float sx = x0 + (x + 0.5f) * w / s - 0.5f;
      const float sy = y0 + (y + 0.5f) * h / s - 0.5f;
      for (int c = 0; c < 3; ++c) out(c, static_cast<Eigen::Index>(y) * s + x) = sample(img, c, s, sx, sy);
    }
  return out;
}

PlanarImage affine(const PlanarImage& img, float a, float b, float c, float d, float e, float f) {
  const int s = planar_size(img);
  const float centre = (s - 1) / 2.0f;
  PlanarImage out(3, img.cols());
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const float u = x - centre, v = y - centre;
      const float sx = a * u + b * v + c + centre;
      const float sy = d * u + e * v + f + centre;
      for (int ch = 0; ch < 3; ++ch) out(ch, static_cast<Eigen::Index>(y) * s + x) = sample(img, ch, s, sx, sy);
    }
  return out;
}

PlanarImage rotate(const PlanarImage& img, float degrees) {
  const float t = degrees * std::numbers::pi_v<float> / 180.0f;
  return affine(img, std::cos(t), std::sin(t), 0.0f, -std::sin(t), std::cos(t), 0.0f);
}

PlanarImage adjust_brightness(const PlanarImage& img, float factor) { return clamp01(img * factor); }

PlanarImage adjust_contrast(const PlanarImage& img, float factor) {
  const float mean = luma(img).mean();
  return clamp01(((img.array() - mean) * factor + mean).matrix());
}

PlanarImage adjust_saturation(const PlanarImage& img, float factor) {
  const Eigen::RowVectorXf gray = luma(img);
  PlanarImage out = img;
  for (int c = 0; c < 3; ++c) out.row(c) = gray + factor * (img.row(c) - gray);
  return clamp01(out);
}

PlanarImage adjust_hue(const PlanarImage& img, float shift) {
  const float t = 2.0f * std::numbers::pi_v<float> * shift;
  const float cs = std::cos(t), sn = std::sin(t);
  const Eigen::RowVectorXf yy = luma(img);
  const Eigen::RowVectorXf ii = 0.596f * img.row(0) - 0.274f * img.row(1) - 0.322f * img.row(2);
  const Eigen::RowVectorXf qq = 0.211f * img.row(0) - 0.523f * img.row(1) + 0.312f * img.row(2);
  const Eigen::RowVectorXf i2 = cs * ii - sn * qq;
  const Eigen::RowVectorXf q2 = sn * ii + cs * qq;
  PlanarImage out(3, img.cols());
  out.row(0) = yy + 0.956f * i2 + 0.621f * q2;
  out.row(1) = yy - 0.272f * i2 - 0.647f * q2;
  out.row(2) = yy - 1.106f * i2 + 1.703f * q2;
  return clamp01(out);
}

PlanarImage adjust_sharpness(const PlanarImage& img, float factor) {
  const auto smooth = convolve3(img, {1 / 13.f, 1 / 13.f, 1 / 13.f, 1 / 13.f, 5 / 13.f, 1 / 13.f, 1 / 13.f,
                                      1 / 13.f, 1 / 13.f});
  return clamp01(smooth + factor * (img - smooth));
}

PlanarImage grayscale(const PlanarImage& img) { return luma(img).replicate(3, 1); }

PlanarImage posterize(const PlanarImage& img, int bits) {
  const int levels = 1 << std::clamp(bits, 1, 8);
  const float step = 256.0f / levels;
  return img.unaryExpr([step](float v) {
    const float byte = std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
    return std::floor(byte / step) * step / 255.0f;
  });
}

PlanarImage solarize(const PlanarImage& img, float threshold) {
  return img.unaryExpr([threshold](float v) { return v >= threshold ? 1.0f - v : v; });
}

PlanarImage autocontrast(const PlanarImage& img) {
  PlanarImage out = img;
  for (int c = 0; c < 3; ++c) {
    const float lo = img.row(c).minCoeff(), hi = img.row(c).maxCoeff();
    if (hi > lo) out.row(c) = (img.row(c).array() - lo) / (hi - lo);
  }
  return out;
}

PlanarImage equalize(const PlanarImage& img) {
  PlanarImage out = img;
  const auto n = img.cols();
  for (int c = 0; c < 3; ++c) {
    std::array<int, 256> hist{};
    for (Eigen::Index i = 0; i < n; ++i) ++hist[static_cast<int>(std::clamp(img(c, i), 0.0f, 1.0f) * 255.0f + 0.5f)];
    std::array<float, 256> lut{};
    int cum = 0;
    const int first = static_cast<int>(std::find_if(hist.begin(), hist.end(), [](int h) { return h > 0; }) - hist.begin());
    const int denom = static_cast<int>(n) - hist[first];
    for (int v = 0; v < 256; ++v) {
      cum += hist[v];
      lut[v] = denom > 0 ? std::clamp(static_cast<float>(cum - hist[first]) / denom, 0.0f, 1.0f) : v / 255.0f;
    }
    for (Eigen::Index i = 0; i < n; ++i) out(c, i) = lut[static_cast<int>(std::clamp(img(c, i), 0.0f, 1.0f) * 255.0f + 0.5f)];
  }
  return out;
}

PlanarImage gaussian_blur(const PlanarImage& img, float sigma) {
  const int s = planar_size(img);
  if (sigma <= 1e-3f) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> k(2 * radius + 1);
  float total = 0.0f;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5f * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;
  auto at = [s](int i) { return std::clamp(i, 0, s - 1); };
  PlanarImage tmp(3, img.cols()), out(3, img.cols());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img(c, static_cast<Eigen::Index>(y) * s + at(x + i));
        tmp(c, static_cast<Eigen::Index>(y) * s + x) = acc;
      }
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(c, static_cast<Eigen::Index>(at(y + i)) * s + x);
        out(c, static_cast<Eigen::Index>(y) * s + x) = acc;
      }
  }
  return out;
}

Sample augment_basic(Sample s, std::mt19937_64& rng) {
  const int size = planar_size(s.pixels);
  if (coin(rng, 0.5)) s.pixels = hflip(s.pixels);
  const float side = uniform(rng, 0.9f, 1.0f) * size;
  const float x0 = uniform(rng, 0.0f, size - side);
  const float y0 = uniform(rng, 0.0f, size - side);
  s.pixels = resized_crop(s.pixels, x0, y0, side, side);
  return s;
}

Sample augment_randaugment(Sample s, std::mt19937_64& rng, int num_ops, int magnitude) {
  s = augment_basic(std::move(s), rng);
  const int size = planar_size(s.pixels);
  const float m = static_cast<float>(magnitude) / 30.0f;  // position within 31 bins
  for (int k = 0; k < num_ops; ++k) {
    const int op = std::uniform_int_distribution<int>(0, 13)(rng);
    const float sign = coin(rng, 0.5) ? 1.0f : -1.0f;
    auto& p = s.pixels;
    switch (op) {
      case 0: break;  // identity
      case 1: p = affine(p, 1.0f, sign * 0.3f * m, 0.0f, 0.0f, 1.0f, 0.0f); break;
      case 2: p = affine(p, 1.0f, 0.0f, 0.0f, sign * 0.3f * m, 1.0f, 0.0f); break;
      case 3: p = affine(p, 1.0f, 0.0f, sign * 150.0f / 331.0f * size * m, 0.0f, 1.0f, 0.0f); break;
      case 4: p = affine(p, 1.0f, 0.0f, 0.0f, 0.0f, 1.0f, sign * 150.0f / 331.0f * size * m); break;
      case 5: p = rotate(p, sign * 30.0f * m); break;
      case 6: p = adjust_brightness(p, 1.0f + sign * 0.9f * m); break;
      case 7: p = adjust_saturation(p, 1.0f + sign * 0.9f * m); break;
      case 8: p = adjust_contrast(p, 1.0f + sign * 0.9f * m); break;
      case 9: p = adjust_sharpness(p, 1.0f + sign * 0.9f * m); break;
      case 10: p = posterize(p, 8 - static_cast<int>(std::lround(magnitude / 7.5))); break;
      case 11: p = solarize(p, 1.0f - m); break;
      case 12: p = autocontrast(p); break;
      case 13: p = equalize(p); break;
    }
  }
  return s;
}

Sample augment(Sample s, AugmentPolicy policy, std::mt19937_64& rng) {
  switch (policy) {
    case AugmentPolicy::none: return s;
    case AugmentPolicy::basic: return augment_basic(std::move(s), rng);
    case AugmentPolicy::randaugment_default: return augment_randaugment(std::move(s), rng);
  }
  return s;
}

PlanarImage contrastive_view(const PlanarImage& img, std::mt19937_64& rng) {
  const int size = planar_size(img);
  float cw = size, ch = size, cx = 0, cy = 0;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const float area = uniform(rng, 0.2f, 1.0f) * size * size;
    const float ratio = std::exp(uniform(rng, std::log(3.0f / 4.0f), std::log(4.0f / 3.0f)));
    const float w = std::sqrt(area * ratio), h = std::sqrt(area / ratio);
    if (w <= size && h <= size) {
      cw = w;
      ch = h;
      cx = uniform(rng, 0.0f, size - w);
      cy = uniform(rng, 0.0f, size - h);
      found = true;
    }
  }
  PlanarImage v = resized_crop(img, cx, cy, cw, ch);
  if (coin(rng, 0.8)) {
    // jitter order is randomised, as in the reference colour-jitter transform
    std::array<int, 4> order = {0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    for (int o : order) {
      switch (o) {
        case 0: v = adjust_brightness(v, uniform(rng, 0.6f, 1.4f)); break;
        case 1: v = adjust_contrast(v, uniform(rng, 0.6f, 1.4f)); break;
        case 2: v = adjust_saturation(v, uniform(rng, 0.6f, 1.4f)); break;
        case 3: v = adjust_hue(v, uniform(rng, -0.1f, 0.1f)); break;
      }
    }
  }
  if (coin(rng, 0.2)) v = grayscale(v);
  if (coin(rng, 0.5)) v = gaussian_blur(v, uniform(rng, 0.1f, 2.0f) * size / 224.0f);
  if (coin(rng, 0.5)) v = hflip(v);
  return v;
}

PlanarImage standardize(const PlanarImage& img) {
  static const Eigen::Vector3f mean(0.485f, 0.456f, 0.406f);
  static const Eigen::Vector3f stddev(0.229f, 0.224f, 0.225f);
  PlanarImage out = img;
  for (int c = 0; c < 3; ++c) out.row(c) = (img.row(c).array() - mean(c)) / stddev(c);
  return out;
}

}  // namespace maskprivacy
