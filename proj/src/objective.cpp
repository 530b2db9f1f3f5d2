#include "sta/objective.hpp"

#include "sta/math.hpp"

#include <algorithm>
#include <cmath>

namespace sta {

TargetAssignment assign_targets(const std::vector<DetectionCandidate>& top_k,
                                const StaAnnotation& annotation, Real iou_thr) {
  const Eigen::Index k = Eigen::Index(top_k.size());
  TargetAssignment out;
  out.obj_label = IntVec::Zero(k);
  out.verb_label = IntVec::Constant(k, -1);
  out.ttc_target = Vec::Zero(k);
  out.loss_mask.resize(k);
  for (Eigen::Index i = 0; i < k; ++i)
    out.loss_mask(i) = !top_k[std::size_t(i)].is_padding;

  std::vector<bool> taken(top_k.size(), false);
  for (const StaTarget& target : annotation.targets) {
    Eigen::Index best = -1;
    Real best_iou = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& cand = top_k[std::size_t(i)];
      if (cand.is_padding || taken[std::size_t(i)]) continue;
      if (cand.noun_id != target.noun_id) continue;
      const Real ov = iou(cand.box, target.box);
      if (ov < iou_thr) continue;
      if (best < 0 || ov > best_iou) {  // strict: ties keep the lower index
        best = i;
        best_iou = ov;
      }
    }
    if (best >= 0) {
      taken[std::size_t(best)] = true;
      out.obj_label(best) = 1;
      out.verb_label(best) = target.verb_id;
      out.ttc_target(best) = target.ttc;
    }
  }
  return out;
}

Real loss_obj(const Vec& p_obj, const IntVec& obj_label,
              const BoolVec& loss_mask) {
  Real sum = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < p_obj.size(); ++i) {
    if (!loss_mask(i)) continue;
    const Real p = std::clamp(p_obj(i), kLossEps, Real(1) - kLossEps);
    sum += obj_label(i) ? -std::log(p) : -std::log(Real(1) - p);
    ++n;
  }
  return n ? sum / n : Real(0);
}

Real loss_int(const Mat& p_int, const IntVec& verb_label) {
  Real sum = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < verb_label.size(); ++i) {
    if (verb_label(i) < 0) continue;
    const Real p = std::max(p_int(i, verb_label(i)), kLossEps);
    sum += -std::log(p);
    ++n;
  }
  return n ? sum / n : Real(0);
}

Real loss_ttc(const Vec& ttc, const Vec& ttc_target, const BoolVec& matched,
              Real beta) {
  Real sum = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < ttc.size(); ++i) {
    if (!matched(i)) continue;
    sum += smooth_l1(ttc(i) - ttc_target(i), beta);
    ++n;
  }
  return n ? sum / n : Real(0);
}

LossBreakdown total_loss(const std::vector<HeadOutputs>& per_layer_heads,
                         const TargetAssignment& targets,
                         const ModelConfig& config) {
  if (per_layer_heads.empty())
    throw ConfigError("total_loss: at least one layer of head outputs required");

  BoolVec matched(targets.verb_label.size());
  for (Eigen::Index i = 0; i < matched.size(); ++i)
    matched(i) = targets.verb_label(i) >= 0;

  LossBreakdown out;
  out.per_layer.reserve(per_layer_heads.size());
  for (const HeadOutputs& heads : per_layer_heads) {
    const Real lo = loss_obj(heads.p_obj, targets.obj_label, targets.loss_mask);
    const Real li = loss_int(heads.p_int, targets.verb_label);
    const Real lt = loss_ttc(heads.ttc, targets.ttc_target, matched);
    const Real layer_total = config.lambda_obj * lo + config.lambda_int * li +
                             config.lambda_ttc * lt;
    out.per_layer.push_back(layer_total);
    out.total += layer_total;
    out.obj = lo;  // components report the final layer
    out.intn = li;
    out.ttc = lt;
  }
  return out;
}

HeadGrads loss_gradients(const HeadOutputs& heads,
                         const TargetAssignment& targets,
                         const ModelConfig& config, Real scale) {
  const Eigen::Index k = heads.p_obj.size();
  HeadGrads g;
  g.d_p_obj = Vec::Zero(k);
  g.d_p_int = Mat::Zero(heads.p_int.rows(), heads.p_int.cols());
  g.d_ttc = Vec::Zero(k);

  int n_real = 0, n_match = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (targets.loss_mask(i)) ++n_real;
    if (targets.verb_label(i) >= 0) ++n_match;
  }

  if (n_real > 0) {
    const Real w = config.lambda_obj * scale / n_real;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (!targets.loss_mask(i)) continue;
      const Real p = heads.p_obj(i);
      // Exact gradient through the loss clamp: zero where the clamp is active.
      if (p <= kLossEps || p >= Real(1) - kLossEps) continue;
      g.d_p_obj(i) =
          w * (targets.obj_label(i) ? -Real(1) / p : Real(1) / (Real(1) - p));
    }
  }

  if (n_match > 0) {
    const Real wi = config.lambda_int * scale / n_match;
    const Real wt = config.lambda_ttc * scale / n_match;
    for (Eigen::Index i = 0; i < k; ++i) {
      const int verb = targets.verb_label(i);
      if (verb < 0) continue;
      const Real p = heads.p_int(i, verb);
      if (p > kLossEps) g.d_p_int(i, verb) = -wi / p;
      g.d_ttc(i) =
          wt * smooth_l1_grad(heads.ttc(i) - targets.ttc_target(i), Real(1));
    }
  }
  return g;
}

}  // namespace sta
