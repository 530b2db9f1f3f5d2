#pragma once

// Shared helpers for the test binaries: scratch directories and random
// geometry generators.

#include "sta/types.hpp"

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace sta_test {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sta_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline sta::BoundingBox random_box(std::mt19937_64& rng, double min_side = 0.05,
                                   double max_side = 0.5) {
  std::uniform_real_distribution<double> side(min_side, max_side);
  const double w = side(rng);
  const double h = side(rng);
  std::uniform_real_distribution<double> px(0.0, 1.0 - w);
  std::uniform_real_distribution<double> py(0.0, 1.0 - h);
  const double x = px(rng);
  const double y = py(rng);
  return {x, y, x + w, y + h};
}

/// A box overlapping `base` with IoU >= 0.5: shifts by a fraction of the
/// width, keeping most of the area shared.
inline sta::BoundingBox jittered_box(const sta::BoundingBox& base,
                                     std::mt19937_64& rng,
                                     double max_shift_frac = 0.1) {
  std::uniform_real_distribution<double> shift(-max_shift_frac, max_shift_frac);
  const double dx = shift(rng) * base.width();
  const double dy = shift(rng) * base.height();
  sta::BoundingBox b{base.x1 + dx, base.y1 + dy, base.x2 + dx, base.y2 + dy};
  b.x1 = std::max(0.0, b.x1);
  b.y1 = std::max(0.0, b.y1);
  b.x2 = std::min(1.0, b.x2);
  b.y2 = std::min(1.0, b.y2);
  return b;
}

}  // namespace sta_test
