#pragma once

// Target assignment between candidates and ground truth, the three losses,
// their weighted combination, and auxiliary per-layer totals.

#include "sta/fusion.hpp"
#include "sta/types.hpp"

#include <vector>

namespace sta {

/// Per-query training targets. verb_label >= 0 iff the query matched a
/// ground-truth record (obj_label == 1); ttc_target is only meaningful
/// where matched.
struct TargetAssignment {
  IntVec obj_label;   // {0,1}, 0 on padding rows
  IntVec verb_label;  // -1 = unmatched
  Vec ttc_target;
  BoolVec loss_mask;  // true = real (non-padding) query
};

/// Greedy matching: ground-truth targets are processed in annotation order;
/// each takes the unmatched real candidate with the highest IoU >= iou_thr
/// and an equal noun (ties broken by lower candidate index). Candidates left
/// over are negatives; zero matches is a valid outcome.
TargetAssignment assign_targets(const std::vector<DetectionCandidate>& top_k,
                                const StaAnnotation& annotation,
                                Real iou_thr = 0.5);

/// Probability clamp used by the classification losses.
constexpr Real kLossEps = 1e-7;

/// Mean binary cross entropy over masked (real) queries; 0 if none.
Real loss_obj(const Vec& p_obj, const IntVec& obj_label,
              const BoolVec& loss_mask);

/// Mean negative log probability of the true verb over matched queries
/// (verb_label >= 0); 0 if none matched.
Real loss_int(const Mat& p_int, const IntVec& verb_label);

/// Mean smooth L1 over matched queries; 0 if none matched.
Real loss_ttc(const Vec& ttc, const Vec& ttc_target, const BoolVec& matched,
              Real beta = 1.0);

struct LossBreakdown {
  Real obj = 0;  // final-layer components
  Real intn = 0;
  Real ttc = 0;
  Real total = 0;  // sum of per_layer entries
  std::vector<Real> per_layer;
};

/// Lambda-weighted total evaluated at every layer's head outputs and
/// summed (auxiliary supervision). Throws ConfigError on an empty layer
/// list.
LossBreakdown total_loss(const std::vector<HeadOutputs>& per_layer_heads,
                         const TargetAssignment& targets,
                         const ModelConfig& config);

/// Lambda-weighted gradients of one layer's contribution to the total loss
/// w.r.t. that layer's head outputs. Multiplying by `scale` folds in batch
/// averaging.
HeadGrads loss_gradients(const HeadOutputs& heads,
                         const TargetAssignment& targets,
                         const ModelConfig& config, Real scale = 1.0);

}  // namespace sta
