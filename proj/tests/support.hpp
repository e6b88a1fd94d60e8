#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "maskprivacy/dataset.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("maskprivacy_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<maskprivacy::AttributeLabel> synthetic_labels(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> age(0, 100), sex(0, 1), race(0, 4);
  std::vector<maskprivacy::AttributeLabel> out;
  for (std::size_t i = 0; i < n; ++i) {
    maskprivacy::AttributeLabel l;
    l.age_years = age(rng);
    l.sex = static_cast<maskprivacy::Sex>(sex(rng));
    l.race = static_cast<maskprivacy::Race>(race(rng));
    l.image_id = maskprivacy::format_label(l, std::to_string(100000 + i) + ".jpg");
    out.push_back(l);
  }
  return out;
}

}  // namespace testing
