#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskprivacy/geometry.hpp"
#include "maskprivacy/image.hpp"

namespace maskprivacy {

inline constexpr int kLandmarkCount = 68;

struct NoFaceFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LandmarkFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LandmarkSource { detector, heuristic };

/// 68 points in iBUG-68 order: jaw 0-16, brows 17-26, nose 27-35,
/// eyes 36-47, mouth 48-67.
struct LandmarkSet {
  std::array<Point2<double>, kLandmarkCount> points;
  LandmarkSource source = LandmarkSource::heuristic;
};

/// Fractional (x, y) template used by the heuristic provider, relative to
/// the face box. Point 8 (chin) sits at (0.50, 0.98).
const std::array<std::array<double, 2>, kLandmarkCount>& heuristic_template();

// ---- localization -----------------------------------------------------------

class FaceLocator {
 public:
  virtual ~FaceLocator() = default;
  /// One box; the largest-area face when several are present.
  virtual Box<double> locate(const Image& image) const = 0;
};

/// Skin-chroma segmentation (YCbCr box rule) followed by 4-connected
/// component labelling; the box of the largest component wins. Components
/// smaller than `min_area_fraction` of the image are ignored.
class SkinRegionLocator final : public FaceLocator {
 public:
  explicit SkinRegionLocator(double min_area_fraction = 0.01) : min_area_fraction_(min_area_fraction) {}
  Box<double> locate(const Image& image) const override;

  /// Every component box that passes the size filter, largest first.
  std::vector<Box<double>> locate_all(const Image& image) const;

 private:
  double min_area_fraction_;
};

Box<double> locate_face(const Image& image);

// ---- key points ---------------------------------------------------------------

/// Implementations are stateless after construction and may be shared by
/// all batch workers.
class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  virtual LandmarkSet extract(const Image& image, const Box<double>& box, const std::string& image_id) const = 0;
};

/// Maps the fixed fractional template onto the face box.
class HeuristicLandmarkProvider final : public LandmarkProvider {
 public:
  LandmarkSet extract(const Image& image, const Box<double>& box, const std::string& image_id) const override;
};

/// Adapter for external 68-point detectors: reads `<stem>.pts` (iBUG format)
/// from a sidecar directory. Missing or malformed files raise LandmarkFailure.
class PtsFileLandmarkProvider final : public LandmarkProvider {
 public:
  explicit PtsFileLandmarkProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  LandmarkSet extract(const Image& image, const Box<double>& box, const std::string& image_id) const override;

 private:
  std::filesystem::path dir_;
};

LandmarkSet read_pts(const std::filesystem::path& path);
void write_pts(const LandmarkSet& landmarks, const std::filesystem::path& path);

LandmarkSet extract_landmarks(const Image& image, const Box<double>& box);

// ---- mask geometry and rendering ---------------------------------------------

enum class Coverage { medium, high };
enum class MaskShape { round, pointed };

struct MaskSpec {
  Coverage coverage = Coverage::high;
  MaskShape shape = MaskShape::round;
  Rgb color{178, 190, 181};
  double opacity = 1.0;
};

std::string to_string(Coverage c);
std::string to_string(MaskShape s);
Coverage parse_coverage(const std::string& s);
MaskShape parse_shape(const std::string& s);
Rgb parse_color(const std::string& hex);  // "RRGGBB", optional leading '#'
std::string format_color(Rgb c);

/// Lower edge follows jaw points 2-14; the upper edge runs from the cheeks
/// through nose point 29 (high) or 30 (medium). Throws DegenerateGeometry
/// for collinear jaw points or when the mouth/nose-tip points fall outside.
Polygon<double> build_mask_polygon(const LandmarkSet& landmarks, const MaskSpec& spec);

/// Blends spec.color at spec.opacity over pixels whose centres are inside
/// the polygon. Everything else is copied unchanged.
Image apply_mask(const Image& image, const Polygon<double>& polygon, const MaskSpec& spec);

// ---- batch -------------------------------------------------------------------

enum class MaskStatus { ok, landmark_failure, render_failure };
std::string to_string(MaskStatus s);

struct MaskResult {
  std::string image_id;
  MaskStatus status = MaskStatus::ok;
  std::string reason;
  std::optional<Polygon<double>> polygon;
};

struct MaskSummary {
  std::size_t ok_count = 0;
  std::vector<MaskResult> failures;
  MaskSpec spec;
};

struct MaskPipeline {
  std::shared_ptr<const FaceLocator> locator;
  std::shared_ptr<const LandmarkProvider> landmarks;

  static MaskPipeline heuristic();
};

/// Full per-image path: locate, key points, polygon, paint.
MaskResult mask_image(const Image& image, const std::string& image_id, const MaskSpec& spec,
                      const MaskPipeline& pipeline, Image* out);

/// Masks every image file in `input_dir` into `output_dir` (same filename),
/// using up to `parallelism` worker threads. Writes `mask_manifest.tsv` and
/// `mask_summary.json` into `output_dir`. Only failure to create or write
/// `output_dir` itself aborts.
MaskSummary mask_dataset(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                         const MaskSpec& spec, int parallelism, const MaskPipeline& pipeline = MaskPipeline::heuristic());

}  // namespace maskprivacy
