// Command-line front end for the anticipation cascade: synthetic data
// generation, training, prediction, evaluation and visualization.

#include "sta/pipeline.hpp"
#include "sta/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <set>
#include <string>

namespace {

using namespace sta;

const std::set<std::string> kTrainConfigKeys = {
    // model
    "d", "k_train", "k_infer", "top_verbs", "num_layers", "num_heads",
    "ff_dim", "lambda_obj", "lambda_int", "lambda_ttc", "input_size", "grid",
    // schedule
    "epochs", "batch_size", "weight_decay", "lr_base", "lr_backbone",
    "decay_every", "decay_factor", "seed", "max_steps", "device",
    // data plumbing
    "train_split", "eval_split"};

ModelConfig model_config_from(const KeyValueConfig& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.d = cfg.get_int("d", mc.d);
  mc.k_train = cfg.get_int("k_train", mc.k_train);
  mc.k_infer = cfg.get_int("k_infer", mc.k_infer);
  mc.top_verbs = cfg.get_int("top_verbs", mc.top_verbs);
  mc.num_layers = cfg.get_int("num_layers", mc.num_layers);
  mc.num_heads = cfg.get_int("num_heads", mc.num_heads);
  mc.ff_dim = cfg.get_int("ff_dim", mc.ff_dim);
  mc.lambda_obj = cfg.get_real("lambda_obj", mc.lambda_obj);
  mc.lambda_int = cfg.get_real("lambda_int", mc.lambda_int);
  mc.lambda_ttc = cfg.get_real("lambda_ttc", mc.lambda_ttc);
  mc.input_size = cfg.get_int("input_size", mc.input_size);
  mc.grid = cfg.get_int("grid", mc.grid);
  mc.v_noun = data.nouns.size();
  mc.v_verb = data.verbs.size();
  mc.validate();
  return mc;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.get_int("epochs", tc.epochs);
  tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
  tc.weight_decay = cfg.get_real("weight_decay", tc.weight_decay);
  tc.lr_base = cfg.get_real("lr_base", tc.lr_base);
  tc.lr_backbone = cfg.get_real("lr_backbone", tc.lr_backbone);
  tc.decay_every = cfg.get_int("decay_every", tc.decay_every);
  tc.decay_factor = cfg.get_real("decay_factor", tc.decay_factor);
  tc.seed = cfg.get_u64("seed", tc.seed);
  tc.max_steps = cfg.get_int("max_steps", tc.max_steps);
  tc.eval_split = cfg.get_str("eval_split", "eval");
  tc.device = cfg.get_str("device", tc.device);
  return tc;
}

struct CommonArgs {
  std::string data;
  std::string split = "eval";
};

int run_gen(const std::string& spec_file, const std::string& out_dir) {
  KeyValueConfig cfg = spec_file.empty()
                           ? KeyValueConfig()
                           : KeyValueConfig::parse_file(spec_file);
  SyntheticSceneSpec spec = SyntheticSceneSpec::from_config(cfg);
  generate_synthetic(spec, out_dir);
  std::cout << "wrote " << spec.train_frames << " train + " << spec.eval_frames
            << " eval frames, " << spec.num_nouns() << " nouns, "
            << spec.verbs.size() << " verbs to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_file, const std::string& data_dir,
              const std::string& out_dir, const std::string& seed_override) {
  KeyValueConfig cfg = config_file.empty()
                           ? KeyValueConfig()
                           : KeyValueConfig::parse_file(config_file);
  cfg.require_known_keys(kTrainConfigKeys);
  if (!seed_override.empty()) cfg.set("seed", seed_override);

  const std::string train_split = cfg.get_str("train_split", "train");
  Dataset train_set = load_dataset(data_dir, train_split);
  ModelConfig mc = model_config_from(cfg, train_set);
  TrainConfig tc = train_config_from(cfg);

  AnticipationModel model(mc);
  model.init_params(tc.seed);
  RunRecord run = train(model, train_set, tc, std::filesystem::path(out_dir));

  for (const EpochStats& e : run.epochs) {
    std::cout << "epoch " << e.epoch << ": loss " << e.mean_loss.total
              << " (obj " << e.mean_loss.obj << ", int " << e.mean_loss.intn
              << ", ttc " << e.mean_loss.ttc << "), lr " << e.lr_base << "\n";
  }
  for (const EvalRecord& r : run.eval_reports)
    std::cout << format_report(r.report, train_set.nouns.names());
  if (!run.checkpoints.empty())
    std::cout << "checkpoint: " << run.checkpoints.back() << "\n";
  return 0;
}

int run_predict(const std::string& checkpoint, const CommonArgs& common,
                const std::string& out_file, int k_infer, int top_verbs,
                bool multiply_obj_prob) {
  Dataset data = load_dataset(common.data, common.split);
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  require_vocab_match(ckpt, data);
  const int k = k_infer > 0 ? k_infer : ckpt.config.k_infer;
  const int verbs = top_verbs > 0
                        ? top_verbs
                        : std::min(ckpt.config.top_verbs, ckpt.config.v_verb);
  save_predictions(out_file, predict_dataset(*ckpt.model, data, k, verbs,
                                             multiply_obj_prob));
  std::cout << "wrote predictions for " << data.size() << " frames to "
            << out_file << "\n";
  return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& predictions,
                 const CommonArgs& common, int k_infer, int top_verbs,
                 const MetricParams& params, const std::string& report_out) {
  Dataset data = load_dataset(common.data, common.split);
  EvalReport report;
  if (!checkpoint.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
    require_vocab_match(ckpt, data);
    const int k = k_infer > 0 ? k_infer : ckpt.config.k_infer;
    const int verbs = top_verbs > 0
                          ? top_verbs
                          : std::min(ckpt.config.top_verbs, ckpt.config.v_verb);
    report = evaluate_model(*ckpt.model, data, k, verbs, params);
  } else {
    report = evaluate_prediction_file(predictions, data, params);
  }
  std::cout << format_report(report, data.nouns.names());
  if (!report_out.empty()) save_report(report_out, report, data.nouns.names());
  return 0;
}

int run_visualize(const std::string& frame, const std::string& predictions,
                  const CommonArgs& common, const std::string& out_file) {
  Dataset data = load_dataset(common.data, common.split);
  visualize(frame, predictions, data, out_file);
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"short-term object interaction anticipation cascade"};
  app.require_subcommand(1);

  // gen-synthetic
  std::string spec_file, gen_out;
  auto* gen = app.add_subcommand("gen-synthetic",
                                 "generate a synthetic dataset with oracle "
                                 "detections");
  gen->add_option("--spec", spec_file, "synthetic scene spec (key = value)");
  gen->add_option("--out", gen_out, "output dataset root")->required();

  // train
  std::string train_config, train_data, train_out, train_seed;
  auto* tr = app.add_subcommand("train", "train the second stage");
  tr->add_option("--config", train_config, "training config (key = value)");
  tr->add_option("--data", train_data, "dataset root")->required();
  tr->add_option("--out", train_out, "run output directory")->required();
  tr->add_option("--seed", train_seed, "seed override");

  // predict
  std::string pred_ckpt, pred_out;
  CommonArgs pred_common;
  int pred_k = 0, pred_verbs = 0;
  bool pred_mult = false;
  auto* pr = app.add_subcommand("predict", "write a prediction file");
  pr->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
  pr->add_option("--data", pred_common.data, "dataset root")->required();
  pr->add_option("--split", pred_common.split, "dataset split (default eval)");
  pr->add_option("--out", pred_out, "output predictions JSON")->required();
  pr->add_option("--k-infer", pred_k, "candidate queries at inference");
  pr->add_option("--top-verbs", pred_verbs, "verbs kept per query");
  pr->add_flag("--multiply-obj-prob", pred_mult,
               "experimental: multiply scores by p_obj");

  // evaluate
  std::string eval_ckpt, eval_preds, eval_report_out;
  CommonArgs eval_common;
  int eval_k = 0, eval_verbs = 0;
  MetricParams eval_params;
  auto* ev = app.add_subcommand("evaluate", "top-5 mAP in all four modes");
  auto* ck = ev->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  auto* pf = ev->add_option("--predictions", eval_preds, "prediction file");
  ck->excludes(pf);
  ev->add_option("--data", eval_common.data, "dataset root")->required();
  ev->add_option("--split", eval_common.split, "dataset split (default eval)");
  ev->add_option("--k-infer", eval_k,
                 "candidate queries at inference (default: checkpoint value, "
                 "20 unless configured)");
  ev->add_option("--top-verbs", eval_verbs,
                 "verbs kept per query (default: checkpoint value, 6 unless "
                 "configured)");
  ev->add_option("--iou", eval_params.iou_threshold, "IoU threshold");
  ev->add_option("--ttc-tol", eval_params.ttc_tolerance, "ttc tolerance [s]");
  ev->add_option("--report", eval_report_out, "also write the report as JSON");

  // visualize
  std::string vis_frame, vis_preds, vis_out;
  CommonArgs vis_common;
  auto* vi = app.add_subcommand("visualize",
                                "draw a frame's top prediction into a PNG");
  vi->add_option("--frame", vis_frame, "frame id")->required();
  vi->add_option("--predictions", vis_preds, "prediction file")->required();
  vi->add_option("--data", vis_common.data, "dataset root")->required();
  vi->add_option("--split", vis_common.split, "dataset split (default eval)");
  vi->add_option("--out", vis_out, "output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen(spec_file, gen_out);
    if (tr->parsed())
      return run_train(train_config, train_data, train_out, train_seed);
    if (pr->parsed())
      return run_predict(pred_ckpt, pred_common, pred_out, pred_k, pred_verbs,
                         pred_mult);
    if (ev->parsed()) {
      if (eval_ckpt.empty() && eval_preds.empty())
        throw ConfigError("evaluate: pass --checkpoint or --predictions");
      return run_evaluate(eval_ckpt, eval_preds, eval_common, eval_k,
                          eval_verbs, eval_params, eval_report_out);
    }
    if (vi->parsed())
      return run_visualize(vis_frame, vis_preds, vis_common, vis_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
