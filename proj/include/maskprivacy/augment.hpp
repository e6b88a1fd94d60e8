#pragma once

#include <random>
#include <string>

#include <Eigen/Core>

#include "maskprivacy/dataset.hpp"

namespace maskprivacy {

/// Square RGB image in planar layout: 3 x (size*size), values in [0, 1].
using PlanarImage = Eigen::MatrixXf;

enum class AugmentPolicy { none, basic, randaugment_default };
std::string to_string(AugmentPolicy p);
AugmentPolicy parse_augment(const std::string& s);

struct Sample {
  PlanarImage pixels;
  AttributeLabel label;
};

int planar_size(const PlanarImage& img);

// Geometric and photometric primitives. All return a new image of the same
// size; geometric ops sample bilinearly and fill uncovered pixels with 0.
PlanarImage hflip(const PlanarImage& img);
/// Crop [x0, x0+w) x [y0, y0+h) in pixel units and resize back to full size.
PlanarImage resized_crop(const PlanarImage& img, float x0, float y0, float w, float h);
/// out(x, y) = in(a*x + b*y + c, d*x + e*y + f) in centred pixel coordinates.
PlanarImage affine(const PlanarImage& img, float a, float b, float c, float d, float e, float f);
PlanarImage rotate(const PlanarImage& img, float degrees);
PlanarImage adjust_brightness(const PlanarImage& img, float factor);
PlanarImage adjust_contrast(const PlanarImage& img, float factor);
PlanarImage adjust_saturation(const PlanarImage& img, float factor);
/// Hue rotation by `shift` turns (-0.5..0.5) in YIQ space.
PlanarImage adjust_hue(const PlanarImage& img, float shift);
PlanarImage adjust_sharpness(const PlanarImage& img, float factor);
PlanarImage grayscale(const PlanarImage& img);
PlanarImage posterize(const PlanarImage& img, int bits);
PlanarImage solarize(const PlanarImage& img, float threshold);
PlanarImage autocontrast(const PlanarImage& img);
PlanarImage equalize(const PlanarImage& img);
PlanarImage gaussian_blur(const PlanarImage& img, float sigma);

/// Horizontal flip (p = 0.5) and a random crop of at least 90% of each side.
Sample augment_basic(Sample s, std::mt19937_64& rng);

/// Two ops drawn uniformly from the 14-op RandAugment set at magnitude 9 of
/// 31 bins (ImageNet defaults), applied after the basic transform.
Sample augment_randaugment(Sample s, std::mt19937_64& rng, int num_ops = 2, int magnitude = 9);

Sample augment(Sample s, AugmentPolicy policy, std::mt19937_64& rng);

/// Contrastive view: random resized crop (scale 0.2-1), colour jitter
/// (0.4, 0.4, 0.4, 0.1) with p = 0.8, grayscale p = 0.2, Gaussian blur
/// p = 0.5, horizontal flip p = 0.5.
PlanarImage contrastive_view(const PlanarImage& img, std::mt19937_64& rng);

/// Per-channel standardisation with the ImageNet mean and deviation.
PlanarImage standardize(const PlanarImage& img);

}  // namespace maskprivacy
