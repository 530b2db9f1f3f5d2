#pragma once

// First-stage candidate production: the detector abstraction, the
// fixture-backed stub that stands in for a fine-tuned real detector, and
// top-k selection with padding.

#include "sta/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sta {

/// Behavioral contract of the first stage: frame reference -> unordered
/// candidate list. Implementations must be safe for concurrent read-only
/// calls. A real detector plugs in behind this seam; the repo ships only
/// the fixture stub (plus the synthetic oracle detections it loads).
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<DetectionCandidate> detect(
      const std::string& frame_id) const = 0;
};

/// Immutable frame_id -> candidates mapping loaded from a detections JSON
/// file. Every frame in the dataset must have an entry, possibly empty.
class FixtureDetections : public Detector {
 public:
  FixtureDetections() = default;

  static FixtureDetections load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  void insert(const std::string& frame_id,
              std::vector<DetectionCandidate> candidates);
  bool has(const std::string& frame_id) const;
  std::size_t frames() const { return by_frame_.size(); }

  /// Throws DataError naming the id when the frame is unknown.
  std::vector<DetectionCandidate> detect(
      const std::string& frame_id) const override;

 private:
  std::map<std::string, std::vector<DetectionCandidate>> by_frame_;
};

/// Keeps the k highest-score candidates in descending score order, stable on
/// ties (original detector order wins). When fewer than k exist, the tail is
/// filled with padding entries: degenerate zero box, the reserved padding
/// noun, score 0. Output length is always exactly k.
std::vector<DetectionCandidate> select_top_k(
    const std::vector<DetectionCandidate>& candidates, int k,
    int padding_noun_id);

}  // namespace sta
