#include "sta/pipeline.hpp"

#include "sta/encoding.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace sta {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (weight_decay < 0)
    throw ConfigError("TrainConfig: weight_decay must be >= 0");
  if (!(lr_base > 0)) throw ConfigError("TrainConfig: lr_base must be > 0");
  if (!(lr_backbone > 0))
    throw ConfigError("TrainConfig: lr_backbone must be > 0");
  if (decay_every < 1) throw ConfigError("TrainConfig: decay_every must be >= 1");
  if (!(decay_factor > 0))
    throw ConfigError("TrainConfig: decay_factor must be > 0");
  if (max_steps < 0) throw ConfigError("TrainConfig: max_steps must be >= 0");
  if (device != "cpu")
    throw ConfigError("TrainConfig: only device = cpu is supported");
}

AdamW::AdamW(Real beta1, Real beta2, Real eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(const ParamRefs& params, Real lr_base, Real lr_backbone,
                 Real weight_decay) {
  if (moments_.empty()) {
    moments_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      moments_[i].m = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
      moments_[i].v = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
    }
  }
  if (moments_.size() != params.size())
    throw ShapeError("AdamW: parameter list changed between steps");

  ++steps_;
  const Real bc1 = Real(1) - std::pow(beta1_, Real(steps_));
  const Real bc2 = Real(1) - std::pow(beta2_, Real(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i];
    Moments& mom = moments_[i];
    mom.m = beta1_ * mom.m + (Real(1) - beta1_) * t.grad;
    mom.v = beta2_ * mom.v + (Real(1) - beta2_) * t.grad.cwiseProduct(t.grad);
    const Real lr = t.backbone_group ? lr_backbone : lr_base;
    const Mat update = ((mom.m / bc1).array() /
                        ((mom.v / bc2).array().sqrt() + eps_))
                           .matrix();
    // Decoupled weight decay: both terms read the pre-update weights.
    t.value = (Real(1) - lr * weight_decay) * t.value - lr * update;
  }
}

Real scheduled_lr(Real base, int epoch, int decay_every, Real decay_factor) {
  return base * std::pow(decay_factor, Real(epoch / decay_every));
}

namespace {

json config_snapshot_json(const ModelConfig& mc, const TrainConfig& tc) {
  return json{{"model",
               {{"d", mc.d},
                {"k_train", mc.k_train},
                {"k_infer", mc.k_infer},
                {"top_verbs", mc.top_verbs},
                {"num_layers", mc.num_layers},
                {"num_heads", mc.num_heads},
                {"ff_dim", mc.ff_dim},
                {"v_noun", mc.v_noun},
                {"v_verb", mc.v_verb},
                {"lambda_obj", mc.lambda_obj},
                {"lambda_int", mc.lambda_int},
                {"lambda_ttc", mc.lambda_ttc},
                {"input_size", mc.input_size},
                {"grid", mc.grid}}},
              {"train",
               {{"epochs", tc.epochs},
                {"batch_size", tc.batch_size},
                {"weight_decay", tc.weight_decay},
                {"lr_base", tc.lr_base},
                {"lr_backbone", tc.lr_backbone},
                {"decay_every", tc.decay_every},
                {"decay_factor", tc.decay_factor},
                {"seed", tc.seed},
                {"max_steps", tc.max_steps},
                {"eval_split", tc.eval_split},
                {"device", tc.device}}}};
}

/// Per-frame state computed once up front; training touches images only here.
struct FrameCache {
  FrameInputs inputs;
  TargetAssignment targets;
};

std::vector<FrameCache> build_frame_cache(const AnticipationModel& model,
                                          const Dataset& dataset, int k) {
  const ModelConfig& cfg = model.config();
  ToyPatchifyBackbone backbone(cfg.input_size, cfg.grid);
  std::vector<FrameCache> cache;
  cache.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string& frame_id = dataset.manifest.frame_ids[i];
    std::vector<DetectionCandidate> top_k = select_top_k(
        dataset.detections.detect(frame_id), k, cfg.padding_noun());
    ImageBuffer image =
        resize_image(load_image(dataset.manifest.frame_path(frame_id)),
                     cfg.input_size);
    FrameCache entry;
    entry.inputs = make_frame_inputs(top_k, backbone.grid_features(image));
    entry.targets = assign_targets(top_k, dataset.annotation(i));
    cache.push_back(std::move(entry));
  }
  return cache;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& item) {
  acc.obj += item.obj;
  acc.intn += item.intn;
  acc.ttc += item.ttc;
  acc.total += item.total;
  if (acc.per_layer.size() < item.per_layer.size())
    acc.per_layer.resize(item.per_layer.size(), 0);
  for (std::size_t l = 0; l < item.per_layer.size(); ++l)
    acc.per_layer[l] += item.per_layer[l];
}

void scale_breakdown(LossBreakdown& acc, Real s) {
  acc.obj *= s;
  acc.intn *= s;
  acc.ttc *= s;
  acc.total *= s;
  for (Real& v : acc.per_layer) v *= s;
}

}  // namespace

RunRecord train(AnticipationModel& model, const Dataset& dataset,
                const TrainConfig& config,
                const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (dataset.size() == 0) throw DataError("train: dataset has no frames");
  const ModelConfig& mcfg = model.config();

  std::vector<FrameCache> cache =
      build_frame_cache(model, dataset, mcfg.k_train);
  ParamRefs params = model.parameters();
  AdamW optimizer;
  std::mt19937_64 rng(config.seed);

  RunRecord run;
  run.config_snapshot = config_snapshot_json(mcfg, config).dump();

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  int steps = 0;
  bool stopped = false;
  for (int epoch = 0; epoch < config.epochs && !stopped; ++epoch) {
    const Real lr_base =
        scheduled_lr(config.lr_base, epoch, config.decay_every,
                     config.decay_factor);
    const Real lr_backbone =
        scheduled_lr(config.lr_backbone, epoch, config.decay_every,
                     config.decay_factor);
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown epoch_loss;
    int epoch_batches = 0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + std::size_t(config.batch_size));
      const Real inv_batch = Real(1) / Real(end - start);

      zero_grads(params);
      LossBreakdown batch_loss;
      for (std::size_t pos = start; pos < end; ++pos) {
        const FrameCache& frame = cache[order[pos]];
        ModelTrace trace;
        std::vector<HeadOutputs> heads = model.forward(frame.inputs, &trace);
        LossBreakdown frame_loss = total_loss(heads, frame.targets, mcfg);
        scale_breakdown(frame_loss, inv_batch);
        accumulate(batch_loss, frame_loss);

        std::vector<HeadGrads> grads;
        grads.reserve(heads.size());
        for (const HeadOutputs& layer : heads)
          grads.push_back(loss_gradients(layer, frame.targets, mcfg, inv_batch));
        model.backward(trace, grads);
      }
      if (!std::isfinite(batch_loss.total))
        throw NumericError("batch " + std::to_string(epoch_batches) +
                           " of epoch " + std::to_string(epoch) +
                           " produced a non-finite loss");

      optimizer.step(params, lr_base, lr_backbone, config.weight_decay);
      accumulate(epoch_loss, batch_loss);
      ++epoch_batches;
      ++epoch_steps;
      ++steps;
      if (config.max_steps > 0 && steps >= config.max_steps) {
        stopped = true;
        break;
      }
    }

    scale_breakdown(epoch_loss, Real(1) / Real(std::max(epoch_batches, 1)));
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr_base = lr_base;
    stats.lr_backbone = lr_backbone;
    stats.steps = epoch_steps;
    stats.mean_loss = std::move(epoch_loss);
    run.epochs.push_back(std::move(stats));
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    const std::filesystem::path ckpt = *out_dir / "checkpoint.stc";
    save_checkpoint(ckpt, model, dataset.nouns.names(), dataset.verbs.names());
    run.checkpoints.push_back(ckpt.string());
  }

  if (!config.eval_split.empty()) {
    Dataset eval_set = load_dataset(dataset.manifest.root, config.eval_split);
    // top_verbs cannot exceed the dataset's verb vocabulary.
    const int top_verbs = std::min(mcfg.top_verbs, mcfg.v_verb);
    EvalRecord record;
    record.checkpoint = run.checkpoints.empty() ? "" : run.checkpoints.back();
    record.report = evaluate_model(model, eval_set, mcfg.k_infer, top_verbs);
    run.eval_reports.push_back(std::move(record));
  }

  if (out_dir) save_run_record(*out_dir / "run.json", run);
  return run;
}

std::vector<FramePredictions> predict_dataset(const AnticipationModel& model,
                                              const Dataset& dataset,
                                              int k_infer, int top_verbs,
                                              bool multiply_obj_prob) {
  const ModelConfig& cfg = model.config();
  ToyPatchifyBackbone backbone(cfg.input_size, cfg.grid);
  std::vector<FramePredictions> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string& frame_id = dataset.manifest.frame_ids[i];
    std::vector<DetectionCandidate> top_k = select_top_k(
        dataset.detections.detect(frame_id), k_infer, cfg.padding_noun());
    ImageBuffer image =
        resize_image(load_image(dataset.manifest.frame_path(frame_id)),
                     cfg.input_size);
    FrameInputs inputs =
        make_frame_inputs(top_k, backbone.grid_features(image));
    std::vector<HeadOutputs> heads = model.forward(inputs);
    out.push_back(score_predictions(frame_id, top_k, heads.back(), top_verbs,
                                    multiply_obj_prob));
  }
  return out;
}

EvalReport evaluate_model(const AnticipationModel& model, const Dataset& dataset,
                          int k_infer, int top_verbs,
                          const MetricParams& params) {
  return evaluate_predictions(
      predict_dataset(model, dataset, k_infer, top_verbs), dataset.annotations,
      params);
}

void require_vocab_match(const LoadedCheckpoint& checkpoint,
                         const Dataset& dataset) {
  if (checkpoint.noun_names != dataset.nouns.names())
    throw DataError("checkpoint noun vocabulary does not match the dataset");
  if (checkpoint.verb_names != dataset.verbs.names())
    throw DataError("checkpoint verb vocabulary does not match the dataset");
}

EvalReport evaluate_prediction_file(const std::filesystem::path& predictions,
                                    const Dataset& dataset,
                                    const MetricParams& params) {
  return evaluate_predictions(load_predictions(predictions),
                              dataset.annotations, params);
}

std::vector<EvalRecord> sweep_candidate_counts(
    const std::vector<int>& candidate_counts, ModelConfig model_config,
    const TrainConfig& train_config, const Dataset& train_set,
    const Dataset& eval_set, const MetricParams& params) {
  std::vector<EvalRecord> out;
  out.reserve(candidate_counts.size());
  for (int count : candidate_counts) {
    ModelConfig cfg = model_config;
    cfg.k_train = count;
    cfg.k_infer = count;
    AnticipationModel model(cfg);
    model.init_params(train_config.seed);
    TrainConfig tc = train_config;
    tc.eval_split.clear();  // evaluated explicitly below
    train(model, train_set, tc);

    EvalRecord record;
    record.checkpoint = "candidates=" + std::to_string(count);
    record.report =
        evaluate_model(model, eval_set, cfg.k_infer,
                       std::min(cfg.top_verbs, cfg.v_verb), params);
    out.push_back(std::move(record));
  }
  return out;
}

void save_run_record(const std::filesystem::path& file, const RunRecord& run) {
  json epochs = json::array();
  for (const EpochStats& e : run.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr_base", e.lr_base},
                      {"lr_backbone", e.lr_backbone},
                      {"steps", e.steps},
                      {"loss",
                       {{"obj", e.mean_loss.obj},
                        {"int", e.mean_loss.intn},
                        {"ttc", e.mean_loss.ttc},
                        {"total", e.mean_loss.total},
                        {"per_layer", e.mean_loss.per_layer}}}});
  }
  json evals = json::array();
  for (const EvalRecord& r : run.eval_reports) {
    json maps = json::object();
    for (const auto& [mode, value] : r.report.map_by_mode)
      maps[metric_mode_name(mode)] = value;
    evals.push_back({{"checkpoint", r.checkpoint},
                     {"map", maps},
                     {"frames_evaluated", r.report.frames_evaluated},
                     {"gt_instances", r.report.gt_instances}});
  }
  json root = {{"config", json::parse(run.config_snapshot, nullptr, false)},
               {"epochs", epochs},
               {"evals", evals},
               {"checkpoints", run.checkpoints}};
  std::ofstream os(file);
  if (!os)
    throw DataError("cannot open run record for writing: " + file.string());
  os << root.dump(2) << '\n';
}

void visualize(const std::string& frame_id,
               const std::filesystem::path& predictions_file,
               const Dataset& dataset, const std::filesystem::path& output) {
  const std::vector<FramePredictions> predictions =
      load_predictions(predictions_file);
  const FramePredictions* frame = nullptr;
  for (const FramePredictions& p : predictions) {
    if (p.frame_id == frame_id) {
      frame = &p;
      break;
    }
  }
  if (!frame)
    throw DataError("frame '" + frame_id + "' not found in " +
                    predictions_file.string());

  ImageBuffer image = load_image(dataset.manifest.frame_path(frame_id));
  std::optional<AnticipationPrediction> top = final_prediction(*frame);
  if (top) {
    char label[128];
    std::snprintf(label, sizeof(label), "%s %s ttc=%.2f s=%.2f",
                  dataset.nouns.name(top->noun_id).c_str(),
                  dataset.verbs.name(top->verb_id).c_str(), top->ttc,
                  top->score);
    draw_prediction(image, top->box, label);
  } else {
    std::cerr << "visualize: frame '" << frame_id
              << "' has no predictions; writing the unmodified image\n";
  }
  save_image(output, image);
}

}  // namespace sta
