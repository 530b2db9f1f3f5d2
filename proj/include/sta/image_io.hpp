#pragma once

// PNG codec, resizing and annotation drawing. The only part of the code
// base that touches OpenCV; everything else works on ImageBuffer.

#include "sta/image.hpp"
#include "sta/types.hpp"

#include <filesystem>
#include <string>

namespace sta {

/// Throws DataError when the file is missing or not decodable.
ImageBuffer load_image(const std::filesystem::path& file);
void save_image(const std::filesystem::path& file, const ImageBuffer& image);

/// Bilinear resize to a square target.
ImageBuffer resize_image(const ImageBuffer& image, int size);

/// Burns one prediction into the image: box outline plus a text label.
/// Boxes reaching outside the frame are clipped, never an error.
void draw_prediction(ImageBuffer& image, const BoundingBox& box,
                     const std::string& label);

}  // namespace sta
