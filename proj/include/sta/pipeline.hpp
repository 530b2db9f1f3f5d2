#pragma once

// Training loop, optimizer, checkpoint plumbing, evaluation drivers, the
// candidate-count ablation sweep and visualization.

#include "sta/data.hpp"
#include "sta/image_io.hpp"
#include "sta/inference.hpp"
#include "sta/metrics.hpp"
#include "sta/model.hpp"
#include "sta/objective.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sta {

struct TrainConfig {
  int epochs = 12;
  int batch_size = 32;
  Real weight_decay = 1e-3;
  Real lr_base = 1e-4;      // everything except the visual feature path
  Real lr_backbone = 1e-5;  // visual-projection (backbone-side) parameters
  int decay_every = 11;     // epochs between x decay_factor steps
  Real decay_factor = 0.1;
  std::uint64_t seed = 0;
  int max_steps = 0;  // 0 = unlimited; otherwise stop after this many updates
  std::string eval_split;  // evaluate the final model on this split if set
  std::string device = "cpu";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Decoupled-weight-decay adaptive-moment optimizer with two learning-rate
/// groups (backbone vs rest).
class AdamW {
 public:
  AdamW(Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);

  void step(const ParamRefs& params, Real lr_base, Real lr_backbone,
            Real weight_decay);

 private:
  struct Moments {
    Mat m, v;
  };
  Real beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Moments> moments_;
};

struct EpochStats {
  int epoch = 0;
  Real lr_base = 0;
  Real lr_backbone = 0;
  int steps = 0;
  LossBreakdown mean_loss;  // averaged over the epoch's batches
};

struct EvalRecord {
  std::string checkpoint;  // the checkpoint this report was produced from
  EvalReport report;
};

/// Append-only account of one training run.
struct RunRecord {
  std::string config_snapshot;  // JSON text of model + train config
  std::vector<EpochStats> epochs;
  std::vector<EvalRecord> eval_reports;
  std::vector<std::string> checkpoints;
};

void save_run_record(const std::filesystem::path& file, const RunRecord& run);

/// Step-decay schedule: lr * decay_factor^floor(epoch / decay_every).
Real scheduled_lr(Real base, int epoch, int decay_every, Real decay_factor);

/// Trains the second stage on the dataset's frames. The detector side
/// (fixtures) is read-only throughout. Deterministic for a fixed seed on a
/// single device. Throws NumericError naming the batch when the loss turns
/// non-finite. When out_dir is set, writes checkpoint.stc and run.json.
RunRecord train(AnticipationModel& model, const Dataset& dataset,
                const TrainConfig& config,
                const std::optional<std::filesystem::path>& out_dir = {});

/// Runs detection + top-k + forward + scoring over every frame, in manifest
/// order. Pure given the model parameters.
std::vector<FramePredictions> predict_dataset(const AnticipationModel& model,
                                              const Dataset& dataset,
                                              int k_infer, int top_verbs,
                                              bool multiply_obj_prob = false);

/// Inference followed by all four metric modes.
EvalReport evaluate_model(const AnticipationModel& model, const Dataset& dataset,
                          int k_infer, int top_verbs,
                          const MetricParams& params = {});

/// Throws DataError when the checkpoint vocabularies differ from the
/// dataset's (order-sensitive exact match).
void require_vocab_match(const LoadedCheckpoint& checkpoint,
                         const Dataset& dataset);

/// Metric modes over an existing prediction file.
EvalReport evaluate_prediction_file(const std::filesystem::path& predictions,
                                    const Dataset& dataset,
                                    const MetricParams& params = {});

/// Trains one model per candidate count and evaluates each, mirroring the
/// candidate-count ablation. Entries come back in `candidate_counts` order.
std::vector<EvalRecord> sweep_candidate_counts(
    const std::vector<int>& candidate_counts, ModelConfig model_config,
    const TrainConfig& train_config, const Dataset& train_set,
    const Dataset& eval_set, const MetricParams& params = {});

/// Draws the frame's top prediction (box, noun/verb names, ttc, score) into
/// a copy of the image at output. Empty predictions produce an unmodified
/// copy plus a warning on stderr.
void visualize(const std::string& frame_id,
               const std::filesystem::path& predictions_file,
               const Dataset& dataset, const std::filesystem::path& output);

}  // namespace sta
