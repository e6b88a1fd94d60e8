#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace maskprivacy {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

/// Closed polygon; the last vertex connects back to the first.
template <typename Scalar>
using Polygon = std::vector<Point2<Scalar>>;

template <typename Scalar>
struct Box {
  Scalar x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  Scalar width() const { return x1 - x0; }
  Scalar height() const { return y1 - y0; }
  Scalar area() const { return std::max<Scalar>(0, width()) * std::max<Scalar>(0, height()); }
};

/// Shoelace area, positive for counter-clockwise vertices in a y-up frame.
template <typename Scalar>
Scalar signed_area(const Polygon<Scalar>& poly) {
  Scalar acc = 0;
  const auto n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    acc += a.x() * b.y() - b.x() * a.y();
  }
  return acc / 2;
}

template <typename Scalar>
Scalar area(const Polygon<Scalar>& poly) {
  return std::abs(signed_area(poly));
}

/// Even-odd crossing test. Points exactly on an edge may land either way.
template <typename Scalar>
bool contains(const Polygon<Scalar>& poly, const Point2<Scalar>& p) {
  bool inside = false;
  const auto n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      Scalar x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

template <typename Scalar>
Polygon<Scalar> clamp_to(const Polygon<Scalar>& poly, Scalar width, Scalar height) {
  Polygon<Scalar> out = poly;
  for (auto& p : out) {
    p.x() = std::clamp<Scalar>(p.x(), 0, width);
    p.y() = std::clamp<Scalar>(p.y(), 0, height);
  }
  return out;
}

/// Coverage of pixel centres (x + 0.5, y + 0.5) under the even-odd rule,
/// one byte per pixel, row-major. Scanline fill; agrees with `contains`.
template <typename Scalar>
std::vector<std::uint8_t> rasterize(const Polygon<Scalar>& poly, int width, int height) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  if (poly.size() < 3) return mask;
  std::vector<Scalar> xs;
  const auto n = poly.size();
  for (int y = 0; y < height; ++y) {
    const Scalar cy = static_cast<Scalar>(y) + Scalar(0.5);
    xs.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = poly[i];
      const auto& b = poly[j];
      if ((a.y() > cy) != (b.y() > cy)) xs.push_back(a.x() + (cy - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // centre cx is inside when xs[k] <= cx < xs[k+1], matching `contains`
      int first = static_cast<int>(std::ceil(xs[k] - Scalar(0.5)));
      int last = static_cast<int>(std::ceil(xs[k + 1] - Scalar(0.5))) - 1;
      first = std::max(first, 0);
      last = std::min(last, width - 1);
      for (int x = first; x <= last; ++x) mask[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return mask;
}

}  // namespace maskprivacy
