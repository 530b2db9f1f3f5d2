#pragma once

// Minimal in-memory image representation so the math core stays free of any
// imaging library. Codecs and drawing live behind image_io.hpp.

#include <cstddef>
#include <vector>

namespace sta {

/// Row-major RGB image with float channels in [0,1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // height * width * 3, interleaved

  float& at(int y, int x, int c) { return rgb[std::size_t(3) * (std::size_t(y) * width + x) + c]; }
  float at(int y, int x, int c) const {
    return rgb[std::size_t(3) * (std::size_t(y) * width + x) + c];
  }

  static ImageBuffer filled(int width, int height, float r, float g, float b) {
    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.rgb.resize(std::size_t(width) * height * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
      img.rgb[i] = r;
      img.rgb[i + 1] = g;
      img.rgb[i + 2] = b;
    }
    return img;
  }
};

}  // namespace sta
