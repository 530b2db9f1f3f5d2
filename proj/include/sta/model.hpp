#pragma once

// The assembled second stage: box/category encoders, visual projection,
// transformer encoder, terminal norm and prediction heads, with an exact
// hand-written backward pass over the whole graph.

#include "sta/detection.hpp"
#include "sta/encoding.hpp"
#include "sta/fusion.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sta {

/// Everything the model consumes for one frame. grid_features are the raw
/// backbone outputs (T x d_v); images never enter the model itself.
struct FrameInputs {
  Mat boxes;        // k x 4, zero rows for padding
  IntVec noun_ids;  // k, padding index for padding rows
  BoolVec padding;  // k
  Mat grid_features;  // T x d_v
};

/// Builds model inputs from a padded top-k candidate list.
FrameInputs make_frame_inputs(const std::vector<DetectionCandidate>& top_k,
                              const Mat& grid_features);

/// Activations of one full forward pass, kept for backward.
struct ModelTrace {
  FrameInputs inputs;
  Mat box_embed, cat_embed;
  QueryMatrix query;
  Mat visual;   // projected tokens
  Mat q_prime;  // (k + T) x d
  BoolVec key_mask;
  std::vector<EncoderLayerTrace> layers;
  std::vector<Mat> layer_outputs;            // residual stream after each layer
  std::vector<LayerNorm::Cache> head_norms;  // terminal norm per layer slice
  std::vector<HeadTrace> heads;
};

class AnticipationModel {
 public:
  explicit AnticipationModel(const ModelConfig& config);

  /// Seeded Gaussian initialization in canonical parameter order.
  void init_params(std::uint64_t seed);

  /// Runs the cascade's second stage on one frame. Returns head outputs for
  /// every encoder layer, final layer last. Pure given the parameters.
  std::vector<HeadOutputs> forward(const FrameInputs& in,
                                   ModelTrace* trace = nullptr) const;

  /// Accumulates parameter gradients for one frame given per-layer head
  /// output gradients (same order as forward's return).
  void backward(const ModelTrace& trace,
                const std::vector<HeadGrads>& head_grads);

  /// Flat registry in canonical order; stable across calls.
  ParamRefs parameters();

  const ModelConfig& config() const { return config_; }

  // Submodule access for targeted tests.
  BoxEncoder& box_encoder() { return box_encoder_; }
  CategoryEmbedding& category_embedding() { return category_embedding_; }
  Linear& visual_projection() { return visual_projection_; }
  TransformerEncoder& encoder() { return encoder_; }
  LayerNorm& terminal_norm() { return terminal_norm_; }
  PredictionHeads& heads() { return heads_; }

 private:
  ModelConfig config_;
  BoxEncoder box_encoder_;
  CategoryEmbedding category_embedding_;
  Linear visual_projection_;
  TransformerEncoder encoder_;
  LayerNorm terminal_norm_;
  PredictionHeads heads_;
};

/// Checkpoint archive: magic + JSON header (model config, vocabularies,
/// tensor index) + contiguous row-major float64 payload. Documented in the
/// README.
void save_checkpoint(const std::filesystem::path& file, AnticipationModel& model,
                     const std::vector<std::string>& noun_names,
                     const std::vector<std::string>& verb_names);

struct LoadedCheckpoint {
  ModelConfig config;
  std::vector<std::string> noun_names;
  std::vector<std::string> verb_names;
  std::unique_ptr<AnticipationModel> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace sta
