#include "sta/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sta {

using nlohmann::json;

const char* metric_mode_name(MetricMode mode) {
  switch (mode) {
    case MetricMode::kNoun: return "noun";
    case MetricMode::kNounVerb: return "noun_verb";
    case MetricMode::kNounTtc: return "noun_ttc";
    case MetricMode::kOverall: return "overall";
  }
  return "unknown";
}

bool match_predicate(const AnticipationPrediction& pred, const StaTarget& gt,
                     MetricMode mode, const MetricParams& params) {
  if (pred.noun_id != gt.noun_id) return false;
  if (iou(pred.box, gt.box) < params.iou_threshold) return false;
  const bool verb_ok = pred.verb_id == gt.verb_id;
  const bool ttc_ok = std::abs(pred.ttc - gt.ttc) <= params.ttc_tolerance;
  switch (mode) {
    case MetricMode::kNoun: return true;
    case MetricMode::kNounVerb: return verb_ok;
    case MetricMode::kNounTtc: return ttc_ok;
    case MetricMode::kOverall: return verb_ok && ttc_ok;
  }
  return false;
}

namespace {

struct PooledPrediction {
  AnticipationPrediction pred;
  std::size_t frame;  // index into annotations
};

/// AP per noun category present in the ground truth.
std::map<int, Real> per_noun_ap(const std::vector<FramePredictions>& predictions,
                                const std::vector<StaAnnotation>& annotations,
                                MetricMode mode, const MetricParams& params) {
  std::unordered_map<std::string, std::size_t> frame_index;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (!frame_index.emplace(annotations[i].frame_id, i).second)
      throw DataError("duplicate annotation frame '" + annotations[i].frame_id +
                      "'");
  }

  // Per-frame top-N by score, pooled per noun in frame order. Score ties
  // keep the original within-frame order.
  std::map<int, std::vector<PooledPrediction>> pools;
  std::unordered_set<std::string> seen;
  for (const FramePredictions& frame : predictions) {
    auto it = frame_index.find(frame.frame_id);
    if (it == frame_index.end())
      throw DataError("predictions reference unknown frame '" + frame.frame_id +
                      "'");
    if (!seen.insert(frame.frame_id).second)
      throw DataError("duplicate prediction frame '" + frame.frame_id + "'");

    std::vector<std::size_t> order(frame.predictions.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return frame.predictions[a].score >
                              frame.predictions[b].score;
                     });
    const std::size_t keep =
        std::min(order.size(), std::size_t(std::max(params.top_n, 0)));
    for (std::size_t j = 0; j < keep; ++j) {
      const AnticipationPrediction& p = frame.predictions[order[j]];
      pools[p.noun_id].push_back({p, it->second});
    }
  }

  std::map<int, int> gt_count;
  for (const StaAnnotation& ann : annotations)
    for (const StaTarget& t : ann.targets) ++gt_count[t.noun_id];

  std::map<int, Real> ap;
  for (const auto& [noun, n_gt] : gt_count) {
    auto pool_it = pools.find(noun);
    if (pool_it == pools.end() || pool_it->second.empty()) {
      ap[noun] = 0;
      continue;
    }
    std::vector<PooledPrediction>& pool = pool_it->second;
    std::stable_sort(pool.begin(), pool.end(),
                     [](const PooledPrediction& a, const PooledPrediction& b) {
                       return a.pred.score > b.pred.score;
                     });

    std::vector<std::vector<bool>> taken(annotations.size());
    std::vector<bool> is_tp(pool.size(), false);
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const PooledPrediction& entry = pool[j];
      const auto& targets = annotations[entry.frame].targets;
      if (taken[entry.frame].empty())
        taken[entry.frame].assign(targets.size(), false);

      int best = -1;
      Real best_iou = 0;
      for (std::size_t gi = 0; gi < targets.size(); ++gi) {
        if (taken[entry.frame][gi]) continue;
        if (!match_predicate(entry.pred, targets[gi], mode, params)) continue;
        const Real ov = iou(entry.pred.box, targets[gi].box);
        if (best < 0 || ov > best_iou) {  // strict: ties keep the lower index
          best = int(gi);
          best_iou = ov;
        }
      }
      if (best >= 0) {
        taken[entry.frame][std::size_t(best)] = true;
        is_tp[j] = true;
      }
    }

    // All-point interpolation: precision envelope summed at TP ranks.
    std::vector<Real> prec(pool.size());
    int tp = 0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (is_tp[j]) ++tp;
      prec[j] = Real(tp) / Real(j + 1);
    }
    for (std::size_t j = pool.size() - 1; j-- > 0;)
      prec[j] = std::max(prec[j], prec[j + 1]);
    Real sum = 0;
    for (std::size_t j = 0; j < pool.size(); ++j)
      if (is_tp[j]) sum += prec[j];
    ap[noun] = sum / Real(n_gt);
  }
  return ap;
}

Real mean_ap(const std::map<int, Real>& ap) {
  if (ap.empty()) return 0;
  Real sum = 0;
  for (const auto& [noun, value] : ap) sum += value;
  return sum / Real(ap.size());
}

std::string noun_label(int id, const std::vector<std::string>& names) {
  if (id >= 0 && std::size_t(id) < names.size()) return names[std::size_t(id)];
  return "noun_" + std::to_string(id);
}

}  // namespace

Real top5_map(const std::vector<FramePredictions>& predictions,
              const std::vector<StaAnnotation>& annotations, MetricMode mode,
              const MetricParams& params) {
  return mean_ap(per_noun_ap(predictions, annotations, mode, params));
}

EvalReport evaluate_predictions(const std::vector<FramePredictions>& predictions,
                                const std::vector<StaAnnotation>& annotations,
                                const MetricParams& params) {
  EvalReport report;
  report.params = params;
  report.frames_evaluated = int(annotations.size());
  for (const StaAnnotation& ann : annotations)
    report.gt_instances += int(ann.targets.size());
  for (MetricMode mode : kAllMetricModes) {
    auto ap = per_noun_ap(predictions, annotations, mode, params);
    report.map_by_mode[mode] = mean_ap(ap);
    report.ap_per_noun[mode] = std::move(ap);
  }
  return report;
}

std::string format_report(const EvalReport& report,
                          const std::vector<std::string>& noun_names) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "top-" << report.params.top_n << " mAP (IoU >= "
     << report.params.iou_threshold << ", ttc tolerance "
     << report.params.ttc_tolerance << "s)\n";
  for (MetricMode mode : kAllMetricModes) {
    std::string name = metric_mode_name(mode);
    os << "  " << name << std::string(12 - name.size(), ' ')
       << report.map_by_mode.at(mode) << '\n';
  }
  os << "frames evaluated: " << report.frames_evaluated
     << ", ground-truth instances: " << report.gt_instances << '\n';

  auto overall = report.ap_per_noun.find(MetricMode::kOverall);
  if (overall != report.ap_per_noun.end() && !overall->second.empty()) {
    os << "per-noun AP (overall mode):\n";
    for (const auto& [noun, ap] : overall->second) {
      std::string label = noun_label(noun, noun_names);
      os << "  " << label
         << std::string(label.size() < 20 ? 20 - label.size() : 1, ' ') << ap
         << '\n';
    }
  }
  return os.str();
}

void save_report(const std::filesystem::path& file, const EvalReport& report,
                 const std::vector<std::string>& noun_names) {
  json maps = json::object();
  json per_noun = json::object();
  for (MetricMode mode : kAllMetricModes) {
    maps[metric_mode_name(mode)] = report.map_by_mode.at(mode);
    json noun_aps = json::object();
    for (const auto& [noun, ap] : report.ap_per_noun.at(mode))
      noun_aps[noun_label(noun, noun_names)] = ap;
    per_noun[metric_mode_name(mode)] = std::move(noun_aps);
  }
  json root = {{"map", maps},
               {"ap_per_noun", per_noun},
               {"frames_evaluated", report.frames_evaluated},
               {"gt_instances", report.gt_instances},
               {"params",
                {{"iou_threshold", report.params.iou_threshold},
                 {"ttc_tolerance", report.params.ttc_tolerance},
                 {"top_n", report.params.top_n}}}};
  std::ofstream os(file);
  if (!os) throw DataError("cannot open report file for writing: " + file.string());
  os << root.dump(2) << '\n';
}

}  // namespace sta
