#include "maskprivacy/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace maskprivacy {
namespace {

struct Canvas {
  Image& img;
  int size;

  void ellipse(double cx, double cy, double rx, double ry, Rgb c) {
    const int x0 = std::max(0, static_cast<int>((cx - rx) * size)), x1 = std::min(size - 1, static_cast<int>((cx + rx) * size) + 1);
    const int y0 = std::max(0, static_cast<int>((cy - ry) * size)), y1 = std::min(size - 1, static_cast<int>((cy + ry) * size) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double u = ((x + 0.5) / size - cx) / rx, v = ((y + 0.5) / size - cy) / ry;
        if (u * u + v * v <= 1.0) img.set(x, y, c);
      }
  }

  void rect(double ux0, double uy0, double ux1, double uy1, Rgb c) {
    const int x0 = std::max(0, static_cast<int>(ux0 * size)), x1 = std::min(size, static_cast<int>(ux1 * size));
    const int y0 = std::max(0, static_cast<int>(uy0 * size)), y1 = std::min(size, static_cast<int>(uy1 * size));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.set(x, y, c);
  }
};

Rgb mix(Rgb a, Rgb b, double t) {
  auto m = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + (static_cast<double>(y) - x) * t));
  };
  return {m(a.r, b.r), m(a.g, b.g), m(a.b, b.b)};
}

Rgb jitter(Rgb c, std::mt19937_64& rng, int amount) {
  std::uniform_int_distribution<int> d(-amount, amount);
  auto j = [&](std::uint8_t v) { return static_cast<std::uint8_t>(std::clamp(v + d(rng), 0, 255)); };
  return {j(c.r), j(c.g), j(c.b)};
}

Rgb skin_tone(Race r) {
  switch (r) {
    case Race::white: return {226, 188, 168};
    case Race::black: return {105, 70, 50};
    case Race::asian: return {228, 192, 146};
    case Race::indian: return {165, 112, 78};
    case Race::other: return {192, 146, 108};
  }
  return {200, 160, 130};
}

}  // namespace

Image render_synthetic_face(const AttributeLabel& label, int size, std::uint64_t seed) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(label.age_years), static_cast<std::uint64_t>(label.sex),
                    static_cast<std::uint64_t>(label.race), static_cast<std::uint64_t>(std::hash<std::string>{}(label.image_id))};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  static const Rgb kBackgrounds[] = {{40, 70, 140}, {60, 110, 80}, {110, 110, 122}, {200, 200, 212}, {30, 30, 40}};
  Image img(size, size, jitter(kBackgrounds[std::uniform_int_distribution<int>(0, 4)(rng)], rng, 10));
  Canvas cv{img, size};

  const double age = label.age_years;
  const bool female = label.sex == Sex::female;
  const double child = std::clamp((14.0 - age) / 14.0, 0.0, 1.0);  // 1 for newborns, 0 from 14 on
  const double grey = std::clamp((age - 30.0) / 45.0, 0.0, 1.0);

  const double cx = 0.5 + (u01(rng) - 0.5) * 0.04;
  const double cy = 0.55 + (u01(rng) - 0.5) * 0.04;
  const double rx = 0.27 + 0.05 * child + (u01(rng) - 0.5) * 0.02;
  const double ry = 0.38 - 0.04 * child + (u01(rng) - 0.5) * 0.02;

  const Rgb skin = jitter(skin_tone(label.race), rng, 6);
  Rgb hair = label.race == Race::white && u01(rng) < 0.35 ? Rgb{150, 148, 138} : Rgb{34, 27, 22};
  hair = mix(hair, {205, 205, 205}, grey);

  // long hair falls behind the face on both sides
  if (female && age >= 4) {
    cv.rect(cx - rx - 0.09, cy - ry * 0.6, cx - rx + 0.04, cy + ry * 0.95, hair);
    cv.rect(cx + rx - 0.04, cy - ry * 0.6, cx + rx + 0.09, cy + ry * 0.95, hair);
  }
  cv.ellipse(cx, cy, rx, ry, skin);

  // hair cap; babies get a thin light cap
  const double cap = child > 0.8 ? 0.10 : 0.22;
  cv.ellipse(cx, cy - ry + cap * 0.35, rx * 1.04, cap, child > 0.8 ? mix(hair, skin, 0.5) : hair);
  cv.rect(cx - rx, cy - ry, cx + rx, cy - ry + cap * 0.35, child > 0.8 ? mix(hair, skin, 0.5) : hair);

  // forehead lines with age
  const int lines = age > 30 ? std::min(4, static_cast<int>((age - 30) / 11) + 1) : 0;
  const Rgb crease = mix(skin, {40, 25, 20}, 0.45);
  for (int k = 0; k < lines; ++k) {
    const double ly = cy - ry * 0.42 + k * 0.025;
    cv.rect(cx - rx * 0.55, ly, cx + rx * 0.55, ly + 0.008 + 0.002 * grey, crease);
  }

  // eyes: bigger for children, narrower for the asian label
  const double ey = cy - ry * 0.18;
  const double ew = 0.055 + 0.015 * child;
  double eh = 0.022 + 0.014 * child;
  if (label.race == Race::asian) eh *= 0.55;
  for (double side : {-1.0, 1.0}) {
    const double ex = cx + side * rx * 0.42;
    cv.ellipse(ex, ey, ew, eh, {240, 240, 236});
    cv.ellipse(ex, ey, eh * 0.9, eh * 0.95, {45, 35, 30});
    const double brow_h = female ? 0.008 : 0.022;
    const double by = ey - eh - 0.03 - (female ? 0.012 : 0.0);
    cv.rect(ex - ew * 1.05, by - brow_h, ex + ew * 1.05, by, mix(hair, {20, 15, 10}, female ? 0.6 : 0.2));
    if (age > 45) cv.rect(ex - ew, ey + eh + 0.01, ex + ew, ey + eh + 0.016, crease);
  }

  // nose and mouth (mostly under the mask)
  cv.rect(cx - 0.015, cy - 0.02, cx + 0.015, cy + 0.09, mix(skin, {60, 40, 30}, 0.25));
  cv.ellipse(cx, cy + 0.2, 0.08, 0.025, female ? Rgb{170, 60, 70} : Rgb{130, 70, 65});
  if (!female && age >= 18) cv.ellipse(cx, cy + 0.27, rx * 0.6, 0.08, mix(skin, hair, 0.55));

  std::uniform_int_distribution<int> noise(-5, 5);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(std::clamp(v + noise(rng), 0, 255));
  return img;
}

std::vector<AttributeLabel> write_synthetic_dataset(const std::filesystem::path& dir, std::size_t count, int size,
                                                    std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> age(1, 90), sex(0, 1), race(0, 4);
  std::vector<AttributeLabel> labels;
  for (std::size_t i = 0; i < count; ++i) {
    AttributeLabel l;
    l.age_years = age(rng);
    l.sex = static_cast<Sex>(sex(rng));
    l.race = static_cast<Race>(race(rng));
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "2017%010zu.jpg", i);
    l.image_id = format_label(l, stamp);
    save_image(render_synthetic_face(l, size, seed + i), dir / l.image_id);
    labels.push_back(l);
  }
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return labels;
}

}  // namespace maskprivacy
