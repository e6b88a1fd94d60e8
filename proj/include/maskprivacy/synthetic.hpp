#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "maskprivacy/dataset.hpp"
#include "maskprivacy/image.hpp"

namespace maskprivacy {

/// Renders a frontal cartoon face whose appearance depends on the label:
/// skin tone and hair colour on race, hair length and brow weight on sex,
/// hair greyness, forehead lines and face proportions on age. The cues sit
/// mostly above the nose so they survive masking. Deterministic in
/// (label, size, seed).
Image render_synthetic_face(const AttributeLabel& label, int size, std::uint64_t seed);

/// Draws `count` labels (ages 1-90, all sex/race codes) and writes UTK-named
/// images to `dir`. Returns the labels in file-name order.
std::vector<AttributeLabel> write_synthetic_dataset(const std::filesystem::path& dir, std::size_t count, int size,
                                                    std::uint64_t seed);

}  // namespace maskprivacy
