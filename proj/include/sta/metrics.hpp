#pragma once

// Top-5 mAP in the four gate modes: noun, noun+verb, noun+ttc, overall.

#include "sta/inference.hpp"
#include "sta/types.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sta {

enum class MetricMode { kNoun, kNounVerb, kNounTtc, kOverall };

constexpr std::array<MetricMode, 4> kAllMetricModes = {
    MetricMode::kNoun, MetricMode::kNounVerb, MetricMode::kNounTtc,
    MetricMode::kOverall};

const char* metric_mode_name(MetricMode mode);

struct MetricParams {
  Real iou_threshold = 0.5;  // inclusive
  Real ttc_tolerance = 0.25;  // seconds, inclusive
  int top_n = 5;             // per-frame truncation before pooling
};

/// Match gate between one prediction and one ground-truth record. Every mode
/// requires IoU >= threshold and noun equality; kNounVerb adds verb
/// equality, kNounTtc adds |ttc error| <= tolerance, kOverall all of them.
bool match_predicate(const AnticipationPrediction& pred, const StaTarget& gt,
                     MetricMode mode, const MetricParams& params);

/// Mean average precision over noun categories that appear in the ground
/// truth. Per frame the top_n highest-score predictions are kept; kept
/// predictions are pooled per noun across frames, sorted by score, and
/// greedily matched one-to-one against unmatched ground truth (highest IoU
/// among predicate-passing records, lower index on ties). AP is the exact
/// area under the all-point interpolated precision-recall curve.
/// Throws DataError naming the frame when predictions reference a frame
/// absent from the annotations.
Real top5_map(const std::vector<FramePredictions>& predictions,
              const std::vector<StaAnnotation>& annotations, MetricMode mode,
              const MetricParams& params = {});

struct EvalReport {
  std::map<MetricMode, Real> map_by_mode;
  std::map<MetricMode, std::map<int, Real>> ap_per_noun;
  int frames_evaluated = 0;
  int gt_instances = 0;
  MetricParams params;
};

/// All four modes in one pass over the same inputs.
EvalReport evaluate_predictions(const std::vector<FramePredictions>& predictions,
                                const std::vector<StaAnnotation>& annotations,
                                const MetricParams& params = {});

/// Report JSON plus an aligned human-readable table.
void save_report(const std::filesystem::path& file, const EvalReport& report,
                 const std::vector<std::string>& noun_names = {});
std::string format_report(const EvalReport& report,
                          const std::vector<std::string>& noun_names = {});

}  // namespace sta
