#include "sta/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace sta {

namespace {

ImageBuffer from_bgr8(const cv::Mat& bgr) {
  ImageBuffer img;
  img.width = bgr.cols;
  img.height = bgr.rows;
  img.rgb.resize(std::size_t(bgr.cols) * bgr.rows * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0f;
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

cv::Mat to_bgr8(const ImageBuffer& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
        row[x][2 - c] = uchar(std::lround(v * 255.0f));
      }
    }
  }
  return bgr;
}

}  // namespace

ImageBuffer load_image(const std::filesystem::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty())
    throw DataError("cannot load image: " + file.string());
  return from_bgr8(bgr);
}

void save_image(const std::filesystem::path& file, const ImageBuffer& image) {
  if (image.width < 1 || image.height < 1)
    throw DataError("refusing to save an empty image: " + file.string());
  if (!cv::imwrite(file.string(), to_bgr8(image)))
    throw DataError("cannot write image: " + file.string());
}

ImageBuffer resize_image(const ImageBuffer& image, int size) {
  if (size < 1) throw ConfigError("resize_image: size must be >= 1");
  if (image.width == size && image.height == size) return image;

  ImageBuffer out;
  out.width = size;
  out.height = size;
  out.rgb.resize(std::size_t(size) * size * 3);
  const float sx = float(image.width) / float(size);
  const float sy = float(image.height) / float(size);
  for (int y = 0; y < size; ++y) {
    const float fy = (y + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(int(std::floor(fy)), 0, image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const float wy = std::clamp(fy - float(y0), 0.0f, 1.0f);
    for (int x = 0; x < size; ++x) {
      const float fx = (x + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(int(std::floor(fx)), 0, image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const float wx = std::clamp(fx - float(x0), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) {
        const float top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
        const float bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

void draw_prediction(ImageBuffer& image, const BoundingBox& box,
                     const std::string& label) {
  cv::Mat bgr = to_bgr8(image);
  const int x1 = int(std::lround(box.x1 * image.width));
  const int y1 = int(std::lround(box.y1 * image.height));
  const int x2 = int(std::lround(box.x2 * image.width));
  const int y2 = int(std::lround(box.y2 * image.height));
  const cv::Scalar color(64, 220, 64);
  cv::rectangle(bgr, cv::Point(x1, y1), cv::Point(x2, y2), color, 1,
                cv::LINE_8);
  if (!label.empty()) {
    const int ty = std::max(y1 - 3, 10);
    cv::putText(bgr, label, cv::Point(std::max(x1, 0), ty),
                cv::FONT_HERSHEY_PLAIN, 0.8, color, 1, cv::LINE_8);
  }
  image = from_bgr8(bgr);
}

}  // namespace sta
