#pragma once

// Turns head outputs and detection scores into ranked predictions per frame.

#include "sta/fusion.hpp"
#include "sta/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sta {

/// All k * K scored predictions for one frame, sorted by score descending,
/// ties broken by (query index, verb index). Padding queries contribute
/// nothing.
struct FramePredictions {
  std::string frame_id;
  std::vector<AnticipationPrediction> predictions;
};

/// For every real query i and each of its top_k_verbs highest-probability
/// verbs j, emits (box_i, noun_i, verb_j, ttc_i, s = sigma_i * p_int[i][j]).
/// With multiply_obj_prob (experimental, off by default) the score picks up
/// the p_obj factor as well. Throws ConfigError when top_k_verbs exceeds the
/// verb vocabulary.
FramePredictions score_predictions(
    const std::string& frame_id,
    const std::vector<DetectionCandidate>& top_k_candidates,
    const HeadOutputs& heads, int top_k_verbs, bool multiply_obj_prob = false);

/// Highest-scoring entry, or nullopt when the frame produced no predictions
/// (no real detections) - a distinct no-prediction signal, not an error.
std::optional<AnticipationPrediction> final_prediction(
    const FramePredictions& frame);

/// Prediction file: JSON array of per-frame records, scores sorted
/// descending within each frame.
void save_predictions(const std::filesystem::path& file,
                      const std::vector<FramePredictions>& predictions);
std::vector<FramePredictions> load_predictions(
    const std::filesystem::path& file);

}  // namespace sta
