#include "maskprivacy/mask.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace maskprivacy {
namespace {

bool is_skin(Rgb c) {
  const double r = c.r, g = c.g, b = c.b;
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const double cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
  const double cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  return y > 40.0 && cr >= 133.0 && cr <= 173.0 && cb >= 77.0 && cb <= 127.0;
}

bool image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".ppm" || ext == ".bmp";
}

void append_edge(Polygon<double>& poly, const Point2<double>& from, const Point2<double>& apex, MaskShape shape,
                 bool toward_apex) {
  // Curve between a jaw anchor and the apex with a horizontal tangent at the
  // apex: y = apex.y + (from.y - apex.y) * u^2, u = |x - apex.x| / span.
  constexpr int kSteps = 8;
  for (int k = 1; k < kSteps; ++k) {
    double t = toward_apex ? static_cast<double>(k) / kSteps : 1.0 - static_cast<double>(k) / kSteps;
    double u = 1.0 - t;  // 1 at the anchor, 0 at the apex
    double x = apex.x() + (from.x() - apex.x()) * u;
    double y = shape == MaskShape::round ? apex.y() + (from.y() - apex.y()) * u * u
                                         : apex.y() + (from.y() - apex.y()) * u;
    poly.emplace_back(x, y);
  }
}

}  // namespace

const std::array<std::array<double, 2>, kLandmarkCount>& heuristic_template() {
  static const std::array<std::array<double, 2>, kLandmarkCount> t = {{
      {0.0200, 0.2500}, {0.0292, 0.3924}, {0.0565, 0.5294}, {0.1009, 0.6556},  // 0-3
      {0.1606, 0.7662}, {0.2333, 0.8570}, {0.3163, 0.9244}, {0.4064, 0.9660},  // 4-7
      {0.5000, 0.9800}, {0.5936, 0.9660}, {0.6837, 0.9244}, {0.7667, 0.8570},  // 8-11
      {0.8394, 0.7662}, {0.8991, 0.6556}, {0.9435, 0.5294}, {0.9708, 0.3924},  // 12-15
      {0.9800, 0.2500}, {0.1500, 0.2200}, {0.2150, 0.1988}, {0.2800, 0.1900},  // 16-19
      {0.3450, 0.1988}, {0.4100, 0.2200}, {0.5900, 0.2200}, {0.6550, 0.1988},  // 20-23
      {0.7200, 0.1900}, {0.7850, 0.1988}, {0.8500, 0.2200}, {0.5000, 0.3000},  // 24-27
      {0.5000, 0.3900}, {0.5000, 0.4800}, {0.5000, 0.5700}, {0.4100, 0.6200},  // 28-31
      {0.4550, 0.6350}, {0.5000, 0.6450}, {0.5450, 0.6350}, {0.5900, 0.6200},  // 32-35
      {0.2300, 0.3300}, {0.2700, 0.3000}, {0.3300, 0.3000}, {0.3900, 0.3300},  // 36-39
      {0.3300, 0.3550}, {0.2700, 0.3550}, {0.6100, 0.3300}, {0.6500, 0.3000},  // 40-43
      {0.7100, 0.3000}, {0.7700, 0.3300}, {0.7100, 0.3550}, {0.6500, 0.3550},  // 44-47
      {0.3300, 0.7800}, {0.3528, 0.7450}, {0.4150, 0.7194}, {0.5000, 0.7100},  // 48-51
      {0.5850, 0.7194}, {0.6472, 0.7450}, {0.6700, 0.7800}, {0.6472, 0.8150},  // 52-55
      {0.5850, 0.8406}, {0.5000, 0.8500}, {0.4150, 0.8406}, {0.3528, 0.8150},  // 56-59
      {0.3900, 0.7800}, {0.4222, 0.7588}, {0.5000, 0.7500}, {0.5778, 0.7588},  // 60-63
      {0.6100, 0.7800}, {0.5778, 0.8012}, {0.5000, 0.8100}, {0.4222, 0.8012},  // 64-67
  }};
  return t;
}

std::vector<Box<double>> SkinRegionLocator::locate_all(const Image& image) const {
  const int w = image.width, h = image.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::uint8_t> skin(label.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) skin[static_cast<std::size_t>(y) * w + x] = is_skin(image.at(x, y));

  struct Component {
    std::size_t pixels = 0;
    Box<double> box;
  };
  std::vector<Component> comps;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < skin.size(); ++start) {
    if (!skin[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(comps.size());
    Component c;
    int minx = w, miny = h, maxx = -1, maxy = -1;
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      auto idx = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
      ++c.pixels;
      minx = std::min(minx, x);
      maxx = std::max(maxx, x);
      miny = std::min(miny, y);
      maxy = std::max(maxy, y);
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
        auto n = static_cast<std::size_t>(ny) * w + nx;
        if (skin[n] && label[n] < 0) {
          label[n] = id;
          stack.push_back(n);
        }
      };
      visit(x - 1, y);
      visit(x + 1, y);
      visit(x, y - 1);
      visit(x, y + 1);
    }
    c.box = {static_cast<double>(minx), static_cast<double>(miny), static_cast<double>(maxx + 1),
             static_cast<double>(maxy + 1)};
    comps.push_back(c);
  }

  const double min_pixels = std::max(64.0, min_area_fraction_ * w * h);
  std::vector<Box<double>> boxes;
  std::vector<Component> kept;
  for (const auto& c : comps)
    if (static_cast<double>(c.pixels) >= min_pixels) kept.push_back(c);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Component& a, const Component& b) { return a.box.area() > b.box.area(); });
  for (const auto& c : kept) boxes.push_back(c.box);
  return boxes;
}

Box<double> SkinRegionLocator::locate(const Image& image) const {
  if (image.empty()) throw NoFaceFound("empty image");
  auto boxes = locate_all(image);
  if (boxes.empty()) throw NoFaceFound("no skin-coloured region large enough for a face");
  return boxes.front();
}

Box<double> locate_face(const Image& image) { return SkinRegionLocator{}.locate(image); }

LandmarkSet HeuristicLandmarkProvider::extract(const Image& image, const Box<double>& box,
                                               const std::string&) const {
  if (box.width() < 2.0 || box.height() < 2.0) throw LandmarkFailure("degenerate face box");
  LandmarkSet lm;
  lm.source = LandmarkSource::heuristic;
  const auto& t = heuristic_template();
  for (int i = 0; i < kLandmarkCount; ++i) {
    double x = box.x0 + t[i][0] * box.width();
    double y = box.y0 + t[i][1] * box.height();
    lm.points[i] = {std::clamp(x, 0.0, static_cast<double>(image.width)),
                    std::clamp(y, 0.0, static_cast<double>(image.height))};
  }
  return lm;
}

LandmarkSet read_pts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LandmarkFailure("no landmark file " + path.string());
  std::string line;
  int n_points = -1;
  LandmarkSet lm;
  lm.source = LandmarkSource::detector;
  while (std::getline(in, line)) {
    if (line.starts_with("n_points:")) n_points = std::stoi(line.substr(9));
    if (line.starts_with("{")) break;
  }
  if (n_points != kLandmarkCount) throw LandmarkFailure(path.string() + ": expected n_points: 68");
  for (int i = 0; i < kLandmarkCount; ++i) {
    double x = 0, y = 0;
    if (!(in >> x >> y)) throw LandmarkFailure(path.string() + ": truncated point list");
    lm.points[i] = {x, y};
  }
  return lm;
}

void write_pts(const LandmarkSet& landmarks, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "version: 1\nn_points: " << kLandmarkCount << "\n{\n";
  for (const auto& p : landmarks.points) out << p.x() << ' ' << p.y() << '\n';
  out << "}\n";
}

LandmarkSet PtsFileLandmarkProvider::extract(const Image& image, const Box<double>&,
                                             const std::string& image_id) const {
  auto lm = read_pts(dir_ / (std::filesystem::path(image_id).stem().string() + ".pts"));
  for (auto& p : lm.points) {
    p.x() = std::clamp(p.x(), 0.0, static_cast<double>(image.width));
    p.y() = std::clamp(p.y(), 0.0, static_cast<double>(image.height));
  }
  return lm;
}

LandmarkSet extract_landmarks(const Image& image, const Box<double>& box) {
  return HeuristicLandmarkProvider{}.extract(image, box, {});
}

std::string to_string(Coverage c) { return c == Coverage::high ? "high" : "medium"; }
std::string to_string(MaskShape s) { return s == MaskShape::round ? "round" : "pointed"; }

Coverage parse_coverage(const std::string& s) {
  if (s == "high") return Coverage::high;
  if (s == "medium") return Coverage::medium;
  throw std::invalid_argument("coverage must be medium or high, got '" + s + "'");
}

MaskShape parse_shape(const std::string& s) {
  if (s == "round") return MaskShape::round;
  if (s == "pointed") return MaskShape::pointed;
  throw std::invalid_argument("shape must be round or pointed, got '" + s + "'");
}

Rgb parse_color(const std::string& hex) {
  std::string h = hex.starts_with('#') ? hex.substr(1) : hex;
  if (h.size() != 6 || h.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw std::invalid_argument("colour must be RRGGBB, got '" + hex + "'");
  auto byte = [&](int i) { return static_cast<std::uint8_t>(std::stoi(h.substr(i, 2), nullptr, 16)); };
  return {byte(0), byte(2), byte(4)};
}

std::string format_color(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02X%02X%02X", c.r, c.g, c.b);
  return buf;
}

Polygon<double> build_mask_polygon(const LandmarkSet& lm, const MaskSpec& spec) {
  Polygon<double> jaw;
  for (int i = 2; i <= 14; ++i) jaw.push_back(lm.points[i]);

  double minx = jaw[0].x(), maxx = minx, miny = jaw[0].y(), maxy = miny;
  for (const auto& p : jaw) {
    minx = std::min(minx, p.x());
    maxx = std::max(maxx, p.x());
    miny = std::min(miny, p.y());
    maxy = std::max(maxy, p.y());
  }
  const double diag2 = (maxx - minx) * (maxx - minx) + (maxy - miny) * (maxy - miny);
  if (diag2 <= 0.0 || area(jaw) / diag2 < 1e-6) throw DegenerateGeometry("jaw points 2-14 are collinear");

  const auto& apex = lm.points[spec.coverage == Coverage::high ? 29 : 30];
  Polygon<double> poly = jaw;
  append_edge(poly, jaw.back(), apex, spec.shape, true);
  poly.push_back(apex);
  append_edge(poly, jaw.front(), apex, spec.shape, false);

  for (int i : {31, 32, 33, 34, 35})
    if (!contains(poly, lm.points[i]))
      throw DegenerateGeometry("nose point " + std::to_string(i) + " falls outside the mask");
  for (int i = 48; i <= 67; ++i)
    if (!contains(poly, lm.points[i]))
      throw DegenerateGeometry("mouth point " + std::to_string(i) + " falls outside the mask");
  return poly;
}

Image apply_mask(const Image& image, const Polygon<double>& polygon, const MaskSpec& spec) {
  if (!(spec.opacity > 0.0 && spec.opacity <= 1.0)) throw std::invalid_argument("opacity must be in (0, 1]");
  Image out = image;
  auto poly = clamp_to(polygon, static_cast<double>(image.width), static_cast<double>(image.height));
  auto cover = rasterize(poly, image.width, image.height);
  const double a = spec.opacity;
  auto blend = [a](std::uint8_t src, std::uint8_t dst) {
    return static_cast<std::uint8_t>(std::lround(a * dst + (1.0 - a) * src));
  };
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      if (!cover[static_cast<std::size_t>(y) * image.width + x]) continue;
      auto c = image.at(x, y);
      out.set(x, y, {blend(c.r, spec.color.r), blend(c.g, spec.color.g), blend(c.b, spec.color.b)});
    }
  return out;
}

std::string to_string(MaskStatus s) {
  switch (s) {
    case MaskStatus::ok: return "ok";
    case MaskStatus::landmark_failure: return "landmark_failure";
    case MaskStatus::render_failure: return "render_failure";
  }
  return "?";
}

MaskPipeline MaskPipeline::heuristic() {
  return {std::make_shared<SkinRegionLocator>(), std::make_shared<HeuristicLandmarkProvider>()};
}

MaskResult mask_image(const Image& image, const std::string& image_id, const MaskSpec& spec,
                      const MaskPipeline& pipeline, Image* out) {
  MaskResult r{image_id, MaskStatus::ok, {}, std::nullopt};
  LandmarkSet lm;
  try {
    auto box = pipeline.locator->locate(image);
    lm = pipeline.landmarks->extract(image, box, image_id);
  } catch (const NoFaceFound& e) {
    r.status = MaskStatus::landmark_failure;
    r.reason = std::string("no face: ") + e.what();
    return r;
  } catch (const LandmarkFailure& e) {
    r.status = MaskStatus::landmark_failure;
    r.reason = e.what();
    return r;
  }
  try {
    auto poly = build_mask_polygon(lm, spec);
    if (out) *out = apply_mask(image, poly, spec);
    r.polygon = std::move(poly);
  } catch (const std::exception& e) {
    r.status = MaskStatus::render_failure;
    r.reason = e.what();
  }
  return r;
}

MaskSummary mask_dataset(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                         const MaskSpec& spec, int parallelism, const MaskPipeline& pipeline) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::exists(input_dir))
    for (const auto& e : std::filesystem::directory_iterator(input_dir))
      if (e.is_regular_file() && image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + output_dir.string() + ": " + ec.message());

  std::vector<MaskResult> results(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      const auto id = files[i].filename().string();
      Image img;
      try {
        img = load_image(files[i]);
      } catch (const ImageIoError& e) {
        results[i] = {id, MaskStatus::render_failure, e.what(), std::nullopt};
        continue;
      }
      Image masked;
      results[i] = mask_image(img, id, spec, pipeline, &masked);
      if (results[i].status != MaskStatus::ok) continue;
      try {
        save_image(masked, output_dir / id);
      } catch (const ImageIoError& e) {
        results[i].status = MaskStatus::render_failure;
        results[i].reason = e.what();
        results[i].polygon.reset();
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(parallelism, static_cast<int>(files.size())));
  std::vector<std::jthread> pool;
  for (int k = 1; k < n_workers; ++k) pool.emplace_back(worker);
  worker();
  pool.clear();

  MaskSummary summary;
  summary.spec = spec;
  std::ofstream manifest(output_dir / "mask_manifest.tsv");
  if (!manifest) throw std::runtime_error("cannot write mask manifest in " + output_dir.string());
  for (auto& r : results) {
    manifest << r.image_id << '\t' << to_string(r.status) << '\t' << r.reason << '\n';
    if (r.status == MaskStatus::ok)
      ++summary.ok_count;
    else
      summary.failures.push_back(std::move(r));
  }

  nlohmann::json j;
  j["ok_count"] = summary.ok_count;
  j["failure_count"] = summary.failures.size();
  j["spec"] = {{"coverage", to_string(spec.coverage)},
               {"shape", to_string(spec.shape)},
               {"color", format_color(spec.color)},
               {"opacity", spec.opacity}};
  std::ofstream js(output_dir / "mask_summary.json");
  js << j.dump(2) << '\n';
  if (!js || !manifest) throw std::runtime_error("failed writing mask summary in " + output_dir.string());
  return summary;
}

}  // namespace maskprivacy
