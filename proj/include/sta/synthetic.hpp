#pragma once

// Deterministic synthetic scene generator: colored geometric objects on a
// noisy background, with rule-derived labels so the cascade can be trained
// and evaluated at desk scale.
//
// Rules (all derived from the last placed geometry, single frame):
//   noun  = "<color>_<shape>" over the configured palettes
//   active object = largest bounding-box area (ties: first placed)
//   verb  = quadrant of the active object's center (TL, TR, BL, BR)
//   ttc   = ttc_base + ttc_rate * sqrt(normalized box area)
// The oracle detections file carries every placed object's true box with a
// seeded score (active objects high, inactive low) plus seeded distractor
// boxes with random nouns and lower scores.

#include "sta/config.hpp"
#include "sta/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sta {

struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  int image_size = 64;
  int train_frames = 64;
  int eval_frames = 32;
  int min_objects = 1;
  int max_objects = 3;
  std::vector<std::string> shapes = {"square", "circle", "triangle"};
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  std::vector<std::string> verbs = {"grab", "push", "pull", "lift"};
  int min_size_px = 10;
  int max_size_px = 26;
  Real ttc_base = 0.5;
  Real ttc_rate = 6.0;
  int min_distractors = 1;
  int max_distractors = 4;
  Real active_score_lo = 0.85, active_score_hi = 0.95;
  Real inactive_score_lo = 0.25, inactive_score_hi = 0.45;
  Real distractor_score_lo = 0.05, distractor_score_hi = 0.20;
  Real noise_std = 0.015;  // background pixel noise, 0 disables

  static SyntheticSceneSpec from_config(const KeyValueConfig& cfg);
  void validate() const;

  int num_nouns() const { return int(shapes.size() * colors.size()); }
  std::vector<std::string> noun_names() const;
  Real ttc_for_area(Real normalized_area) const;
  /// Quadrant rule: 0 = top-left, 1 = top-right, 2 = bottom-left,
  /// 3 = bottom-right (x >= 0.5 counts as right, y >= 0.5 as bottom).
  int verb_for_center(Real cx, Real cy) const;
};

/// Writes frames/, annotations.json, detections.json and manifest.json for
/// the train and eval splits plus shared vocabulary files under out_root.
/// Pure function of the spec: identical spec -> byte-identical dataset.
void generate_synthetic(const SyntheticSceneSpec& spec,
                        const std::filesystem::path& out_root);

}  // namespace sta
