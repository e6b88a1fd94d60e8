#include "maskprivacy/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace maskprivacy {

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageIoError("cannot decode image " + path.string());
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) img.set(x, y, {row[x][2], row[x][1], row[x][0]});
  }
  return img;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      auto c = image.at(x, y);
      row[x] = cv::Vec3b(c.b, c.g, c.r);
    }
  }
  std::vector<int> params;
  auto ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG") params = {cv::IMWRITE_JPEG_QUALITY, 95};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, params);
  } catch (const cv::Exception& e) {
    throw ImageIoError("cannot encode " + path.string() + ": " + e.what());
  }
  if (!ok) throw ImageIoError("cannot write image " + path.string());
}

Eigen::MatrixXf to_planar(const Image& image, int size) {
  if (image.empty()) throw std::invalid_argument("to_planar: empty image");
  Eigen::MatrixXf out(3, static_cast<Eigen::Index>(size) * size);
  const float sx = static_cast<float>(image.width) / size;
  const float sy = static_cast<float>(image.height) / size;
  for (int y = 0; y < size; ++y) {
    float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(image.height - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, image.height - 1);
    float wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(image.width - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, image.width - 1);
      float wx = fx - x0;
      const auto* p00 = &image.data[(static_cast<std::size_t>(y0) * image.width + x0) * 3];
      const auto* p01 = &image.data[(static_cast<std::size_t>(y0) * image.width + x1) * 3];
      const auto* p10 = &image.data[(static_cast<std::size_t>(y1) * image.width + x0) * 3];
      const auto* p11 = &image.data[(static_cast<std::size_t>(y1) * image.width + x1) * 3];
      for (int c = 0; c < 3; ++c) {
        float top = p00[c] + (p01[c] - p00[c]) * wx;
        float bot = p10[c] + (p11[c] - p10[c]) * wx;
        out(c, static_cast<Eigen::Index>(y) * size + x) = (top + (bot - top) * wy) / 255.0f;
      }
    }
  }
  return out;
}

Image from_planar(const Eigen::MatrixXf& planar, int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      auto px = [&](int c) {
        float v = planar(c, static_cast<Eigen::Index>(y) * size + x);
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      };
      img.set(x, y, {px(0), px(1), px(2)});
    }
  return img;
}

}  // namespace maskprivacy
