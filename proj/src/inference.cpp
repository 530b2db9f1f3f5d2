#include "sta/inference.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <tuple>

namespace sta {

using nlohmann::json;

FramePredictions score_predictions(
    const std::string& frame_id,
    const std::vector<DetectionCandidate>& top_k_candidates,
    const HeadOutputs& heads, int top_k_verbs, bool multiply_obj_prob) {
  const int v_verb = int(heads.p_int.cols());
  if (top_k_verbs < 1)
    throw ConfigError("score_predictions: top_k_verbs must be >= 1");
  if (top_k_verbs > v_verb)
    throw ConfigError("score_predictions: top_k_verbs (" +
                      std::to_string(top_k_verbs) +
                      ") exceeds verb vocabulary (" + std::to_string(v_verb) +
                      ")");
  if (heads.p_obj.size() != Eigen::Index(top_k_candidates.size()))
    throw ShapeError("score_predictions: head outputs do not cover candidates");

  struct Scored {
    AnticipationPrediction pred;
    int query;
    int verb;
  };
  std::vector<Scored> scored;
  scored.reserve(top_k_candidates.size() * std::size_t(top_k_verbs));

  for (std::size_t i = 0; i < top_k_candidates.size(); ++i) {
    const auto& cand = top_k_candidates[i];
    if (cand.is_padding) continue;

    // Top verbs for this query, highest probability first; probability ties
    // keep the lower verb index.
    std::vector<int> verbs(static_cast<std::size_t>(v_verb));
    std::iota(verbs.begin(), verbs.end(), 0);
    std::stable_sort(verbs.begin(), verbs.end(), [&](int a, int b) {
      return heads.p_int(Eigen::Index(i), a) > heads.p_int(Eigen::Index(i), b);
    });
    verbs.resize(std::size_t(top_k_verbs));

    for (int verb : verbs) {
      Real s = cand.det_score * heads.p_int(Eigen::Index(i), verb);
      if (multiply_obj_prob) s *= heads.p_obj(Eigen::Index(i));
      Scored entry;
      entry.pred = {cand.box, cand.noun_id, verb, heads.ttc(Eigen::Index(i)), s};
      entry.query = int(i);
      entry.verb = verb;
      scored.push_back(entry);
    }
  }

  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.pred.score != b.pred.score) return a.pred.score > b.pred.score;
    return std::tie(a.query, a.verb) < std::tie(b.query, b.verb);
  });

  FramePredictions out;
  out.frame_id = frame_id;
  out.predictions.reserve(scored.size());
  for (const Scored& s : scored) out.predictions.push_back(s.pred);
  return out;
}

std::optional<AnticipationPrediction> final_prediction(
    const FramePredictions& frame) {
  if (frame.predictions.empty()) return std::nullopt;
  return frame.predictions.front();
}

void save_predictions(const std::filesystem::path& file,
                      const std::vector<FramePredictions>& predictions) {
  json root = json::array();
  for (const FramePredictions& frame : predictions) {
    json preds = json::array();
    for (const AnticipationPrediction& p : frame.predictions) {
      preds.push_back({{"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}},
                       {"noun_id", p.noun_id},
                       {"verb_id", p.verb_id},
                       {"ttc", p.ttc},
                       {"score", p.score}});
    }
    root.push_back({{"frame_id", frame.frame_id}, {"predictions", preds}});
  }
  std::ofstream os(file);
  if (!os)
    throw DataError("cannot open predictions file for writing: " +
                    file.string());
  os << root.dump(2) << '\n';
}

std::vector<FramePredictions> load_predictions(
    const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open predictions file: " + file.string());
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("bad predictions file " + file.string() + ": " + e.what());
  }
  if (!root.is_array())
    throw DataError("predictions file must be a JSON array: " + file.string());

  std::vector<FramePredictions> out;
  out.reserve(root.size());
  for (const json& rec : root) {
    FramePredictions frame;
    try {
      frame.frame_id = rec.at("frame_id").get<std::string>();
      for (const json& p : rec.at("predictions")) {
        const json& b = p.at("box");
        if (!b.is_array() || b.size() != 4)
          throw DataError("box must have four coordinates");
        AnticipationPrediction pred;
        pred.box = {b[0].get<Real>(), b[1].get<Real>(), b[2].get<Real>(),
                    b[3].get<Real>()};
        pred.noun_id = p.at("noun_id").get<int>();
        pred.verb_id = p.at("verb_id").get<int>();
        pred.ttc = p.at("ttc").get<Real>();
        pred.score = p.at("score").get<Real>();
        frame.predictions.push_back(pred);
      }
    } catch (const json::exception& e) {
      throw DataError("bad prediction record in " + file.string() + ": " +
                      e.what());
    }
    out.push_back(std::move(frame));
  }
  return out;
}

}  // namespace sta
