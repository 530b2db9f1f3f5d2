#include "sta/detection.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace sta {

using nlohmann::json;

FixtureDetections FixtureDetections::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open detections file: " + file.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw DataError("malformed detections file " + file.string() + ": " +
                    e.what());
  }
  if (!root.is_array())
    throw DataError("detections file must be a JSON array: " + file.string());

  FixtureDetections store;
  for (const auto& rec : root) {
    if (!rec.contains("frame_id") || !rec.contains("detections"))
      throw DataError("detections record missing frame_id/detections in " +
                      file.string());
    const std::string frame_id = rec.at("frame_id").get<std::string>();
    std::vector<DetectionCandidate> dets;
    for (const auto& d : rec.at("detections")) {
      const auto& b = d.at("box");
      DetectionCandidate c;
      c.box = {b.at(0).get<Real>(), b.at(1).get<Real>(), b.at(2).get<Real>(),
               b.at(3).get<Real>()};
      c.noun_id = d.at("noun_id").get<int>();
      c.det_score = d.at("score").get<Real>();
      if (c.det_score < 0 || c.det_score > 1)
        throw DataError("detection score out of [0,1] for frame " + frame_id);
      dets.push_back(c);
    }
    store.insert(frame_id, std::move(dets));
  }
  return store;
}

void FixtureDetections::save(const std::filesystem::path& file) const {
  json root = json::array();
  for (const auto& [frame_id, dets] : by_frame_) {
    json rec;
    rec["frame_id"] = frame_id;
    rec["detections"] = json::array();
    for (const auto& d : dets) {
      rec["detections"].push_back({{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                                   {"noun_id", d.noun_id},
                                   {"score", d.det_score}});
    }
    root.push_back(std::move(rec));
  }
  std::ofstream out(file);
  if (!out) throw DataError("cannot write detections file: " + file.string());
  out << root.dump(2) << "\n";
}

void FixtureDetections::insert(const std::string& frame_id,
                               std::vector<DetectionCandidate> candidates) {
  by_frame_[frame_id] = std::move(candidates);
}

bool FixtureDetections::has(const std::string& frame_id) const {
  return by_frame_.count(frame_id) != 0;
}

std::vector<DetectionCandidate> FixtureDetections::detect(
    const std::string& frame_id) const {
  auto it = by_frame_.find(frame_id);
  if (it == by_frame_.end())
    throw DataError("no detections for frame '" + frame_id + "'");
  return it->second;
}

std::vector<DetectionCandidate> select_top_k(
    const std::vector<DetectionCandidate>& candidates, int k,
    int padding_noun_id) {
  if (k < 1) throw ConfigError("select_top_k: k must be >= 1");

  // Stable sort keeps original detector order on equal scores.
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].det_score > candidates[b].det_score;
  });

  std::vector<DetectionCandidate> out;
  out.reserve(std::size_t(k));
  for (std::size_t i = 0; i < order.size() && int(out.size()) < k; ++i) {
    out.push_back(candidates[order[i]]);
  }
  while (int(out.size()) < k) {
    DetectionCandidate pad;
    pad.box = BoundingBox{};  // degenerate zero-box sentinel
    pad.noun_id = padding_noun_id;
    pad.det_score = 0;
    pad.is_padding = true;
    out.push_back(pad);
  }
  return out;
}

}  // namespace sta
