#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace maskprivacy {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// 8-bit interleaved RGB image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, Rgb fill = {}) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      data[i] = fill.r;
      data[i + 1] = fill.g;
      data[i + 2] = fill.b;
    }
  }

  bool empty() const { return width <= 0 || height <= 0; }

  Rgb at(int x, int y) const {
    const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  bool operator==(const Image&) const = default;
};

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Image load_image(const std::filesystem::path& path);
/// Encoding follows the extension. JPEG uses quality 95.
void save_image(const Image& image, const std::filesystem::path& path);

/// Bilinear resample to `size`x`size` in planar float layout (3 x size*size,
/// channel-major) with values in [0, 1].
Eigen::MatrixXf to_planar(const Image& image, int size);

/// Inverse of to_planar at the planar resolution (values clamped).
Image from_planar(const Eigen::MatrixXf& planar, int size);

}  // namespace maskprivacy
