#pragma once

// Domain types shared by every stage of the anticipation cascade.
// All types here are immutable value types; operations are pure functions.

#include "sta/common.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace sta {

/// Axis-aligned box in normalized image coordinates, (x1,y1) = top-left.
/// A valid box satisfies 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1; the
/// all-zero box is the degenerate sentinel used by padding candidates.
struct BoundingBox {
  Real x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Real width() const { return x2 - x1; }
  Real height() const { return y2 - y1; }
  Real area() const { return width() * height(); }
  Real cx() const { return Real(0.5) * (x1 + x2); }
  Real cy() const { return Real(0.5) * (y1 + y2); }

  bool valid() const {
    return x1 >= 0 && x1 < x2 && x2 <= 1 && y1 >= 0 && y1 < y2 && y2 <= 1;
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Intersection over union; symmetric, in [0,1] for valid boxes.
inline Real iou(const BoundingBox& a, const BoundingBox& b) {
  const Real iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const Real ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0;
  const Real inter = iw * ih;
  const Real uni = a.area() + b.area() - inter;
  return uni <= 0 ? Real(0) : inter / uni;
}

/// One potential active object produced by the first stage.
struct DetectionCandidate {
  BoundingBox box;
  int noun_id = 0;       // category index; the reserved padding index for pads
  Real det_score = 0;    // detector confidence sigma in [0,1]
  bool is_padding = false;
};

/// One ground-truth interaction record.
struct StaTarget {
  BoundingBox box;
  int noun_id = 0;
  int verb_id = 0;
  Real ttc = 0;  // seconds until contact, strictly positive
};

/// Ground truth for one frame: one or more targets.
struct StaAnnotation {
  std::string frame_id;
  std::vector<StaTarget> targets;
};

/// One ranked output of the cascade.
struct AnticipationPrediction {
  BoundingBox box;
  int noun_id = 0;
  int verb_id = 0;
  Real ttc = 0;
  Real score = 0;  // s = sigma * p_int, nonnegative
};

/// Model hyperparameters. Vocabulary sizes come from the dataset at build
/// time; everything else has a default and is overridable via config file.
struct ModelConfig {
  int d = 256;          // embedding dimension
  int k_train = 10;     // candidate queries during training
  int k_infer = 20;     // candidate queries at inference
  int top_verbs = 6;    // K, interactions kept per query at inference
  int num_layers = 3;   // L
  int num_heads = 8;
  int ff_dim = 0;       // feed-forward width, 0 means 4*d
  int v_noun = 0;       // noun vocabulary size (set from dataset)
  int v_verb = 0;       // verb vocabulary size (set from dataset)
  Real lambda_obj = 2.0;
  Real lambda_int = 2.0;
  Real lambda_ttc = 1.0;
  // Toy patchify backbone geometry: input resized to input_size square,
  // split into grid x grid patches.
  int input_size = 336;
  int grid = 8;

  int tokens() const { return grid * grid; }                  // T
  int patch_size() const { return input_size / grid; }
  int backbone_dim() const {                                  // d_v
    return 3 * patch_size() * patch_size();
  }
  int ffn_dim() const { return ff_dim > 0 ? ff_dim : 4 * d; }
  /// Reserved padding noun index, one past the real vocabulary.
  int padding_noun() const { return v_noun; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

inline void ModelConfig::validate() const {
  if (d < 1) throw ConfigError("ModelConfig: d must be >= 1");
  if (num_heads < 1) throw ConfigError("ModelConfig: num_heads must be >= 1");
  if (d % num_heads != 0)
    throw ConfigError("ModelConfig: d must be divisible by num_heads");
  if (k_train < 1) throw ConfigError("ModelConfig: k_train must be >= 1");
  if (k_infer < 1) throw ConfigError("ModelConfig: k_infer must be >= 1");
  if (top_verbs < 1) throw ConfigError("ModelConfig: top_verbs must be >= 1");
  if (num_layers < 1) throw ConfigError("ModelConfig: num_layers must be >= 1");
  if (ff_dim < 0) throw ConfigError("ModelConfig: ff_dim must be >= 0");
  if (v_noun < 1) throw ConfigError("ModelConfig: v_noun must be >= 1");
  if (v_verb < 1) throw ConfigError("ModelConfig: v_verb must be >= 1");
  if (lambda_obj < 0) throw ConfigError("ModelConfig: lambda_obj must be >= 0");
  if (lambda_int < 0) throw ConfigError("ModelConfig: lambda_int must be >= 0");
  if (lambda_ttc < 0) throw ConfigError("ModelConfig: lambda_ttc must be >= 0");
  if (input_size < 1) throw ConfigError("ModelConfig: input_size must be >= 1");
  if (grid < 1) throw ConfigError("ModelConfig: grid must be >= 1");
  if (input_size % grid != 0)
    throw ConfigError("ModelConfig: input_size must be divisible by grid");
}

}  // namespace sta
