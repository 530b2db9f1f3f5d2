#include "sta/pipeline.hpp"

#include "sta/synthetic.hpp"

#include "oracles.hpp"
#include "util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

using namespace sta;

namespace {

/// One shared tiny dataset per process; generation is deterministic, so
/// sharing is safe and keeps the suite fast.
const std::filesystem::path& dataset_root() {
  static sta_test::TempDir dir("pipe_ds");
  static bool generated = false;
  if (!generated) {
    SyntheticSceneSpec spec;
    spec.seed = 5;
    spec.image_size = 32;
    spec.train_frames = 8;
    spec.eval_frames = 4;
    spec.max_objects = 2;
    spec.shapes = {"square", "circle"};
    spec.colors = {"red", "green"};
    generate_synthetic(spec, dir.path());
    generated = true;
  }
  return dir.path();
}

ModelConfig pipeline_config() {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.k_train = 4;
  cfg.k_infer = 6;
  cfg.top_verbs = 2;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.v_noun = 4;
  cfg.v_verb = 4;
  cfg.input_size = 32;
  cfg.grid = 4;
  return cfg;
}

TrainConfig quick_schedule() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.lr_base = 1e-3;
  tc.lr_backbone = 1e-4;
  tc.decay_every = 100;
  tc.seed = 0;
  return tc;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("train config validation names the offending field") {
  CHECK_NOTHROW(quick_schedule().validate());
  auto expect_fail = [](auto mutate, const char* phrase) {
    TrainConfig tc = quick_schedule();
    mutate(tc);
    CHECK_THROWS_WITH_AS(tc.validate(), doctest::Contains(phrase), ConfigError);
  };
  expect_fail([](TrainConfig& t) { t.epochs = 0; }, "epochs");
  expect_fail([](TrainConfig& t) { t.batch_size = 0; }, "batch_size");
  expect_fail([](TrainConfig& t) { t.weight_decay = -1; }, "weight_decay");
  expect_fail([](TrainConfig& t) { t.lr_base = 0; }, "lr_base");
  expect_fail([](TrainConfig& t) { t.lr_backbone = -1e-4; }, "lr_backbone");
  expect_fail([](TrainConfig& t) { t.decay_every = 0; }, "decay_every");
  expect_fail([](TrainConfig& t) { t.decay_factor = 0; }, "decay_factor");
  expect_fail([](TrainConfig& t) { t.max_steps = -2; }, "max_steps");
  expect_fail([](TrainConfig& t) { t.device = "cuda"; }, "device");
}

TEST_CASE("learning rate schedule steps down every decay interval") {
  CHECK(scheduled_lr(1e-4, 0, 11, 0.1) == 1e-4);
  CHECK(scheduled_lr(1e-4, 10, 11, 0.1) == 1e-4);
  CHECK(scheduled_lr(1e-4, 11, 11, 0.1) ==
        doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(scheduled_lr(1e-4, 21, 11, 0.1) ==
        doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(scheduled_lr(1e-4, 22, 11, 0.1) ==
        doctest::Approx(1e-6).epsilon(1e-12));
  // A 12-epoch run with decay_every = 11 drops exactly once, for the final
  // epoch.
  int drops = 0;
  for (int e = 0; e < 12; ++e)
    if (scheduled_lr(1.0, e, 11, 0.1) < 0.5) ++drops;
  CHECK(drops == 1);
  CHECK(scheduled_lr(2.0, 5, 1, 0.5) == doctest::Approx(2.0 * std::pow(0.5, 5)));
}

TEST_CASE("optimizer single step matches the written-out update rule") {
  Tensor t("w", 1, 2);
  t.value << 1.0, -2.0;
  t.grad << 0.5, -1.0;
  const Real lr = 0.1, wd = 0.01;
  const Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  AdamW opt;
  opt.step({&t}, lr, lr, wd);

  for (int c = 0; c < 2; ++c) {
    const Real g = (c == 0) ? 0.5 : -1.0;
    const Real theta0 = (c == 0) ? 1.0 : -2.0;
    const Real m = (1 - beta1) * g;
    const Real v = (1 - beta2) * g * g;
    const Real m_hat = m / (1 - beta1);
    const Real v_hat = v / (1 - beta2);
    const Real update = m_hat / (std::sqrt(v_hat) + eps);
    const Real expect = (1 - lr * wd) * theta0 - lr * update;
    CHECK(t.value(0, c) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("optimizer matches a reference implementation over many steps") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> dist(0.0, 1.0);

  Tensor a("a", 2, 3);
  Tensor b("b", 1, 4);
  b.backbone_group = true;
  init_normal(a, rng, 1.0);
  init_normal(b, rng, 1.0);
  Mat ref_a = a.value, ref_b = b.value;
  Mat ma = Mat::Zero(2, 3), va = Mat::Zero(2, 3);
  Mat mb = Mat::Zero(1, 4), vb = Mat::Zero(1, 4);

  const Real lr_base = 3e-3, lr_backbone = 3e-4, wd = 0.01;
  const Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  AdamW opt;
  for (int step = 1; step <= 5; ++step) {
    for (Eigen::Index i = 0; i < a.grad.size(); ++i) a.grad(i) = dist(rng);
    for (Eigen::Index i = 0; i < b.grad.size(); ++i) b.grad(i) = dist(rng);

    // Reference update, written independently.
    auto reference = [&](Mat& theta, Mat& m, Mat& v, const Mat& g, Real lr) {
      m = beta1 * m + (1 - beta1) * g;
      v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
      const Real bc1 = 1 - std::pow(beta1, step);
      const Real bc2 = 1 - std::pow(beta2, step);
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const Real m_hat = m(i) / bc1;
        const Real v_hat = v(i) / bc2;
        theta(i) = (1 - lr * wd) * theta(i) -
                   lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    };
    reference(ref_a, ma, va, a.grad, lr_base);
    reference(ref_b, mb, vb, b.grad, lr_backbone);

    opt.step({&a, &b}, lr_base, lr_backbone, wd);
    CHECK((a.value - ref_a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b.value - ref_b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backbone-group tensors train at the backbone rate") {
  Tensor regular("r", 1, 1);
  Tensor backbone("b", 1, 1);
  backbone.backbone_group = true;
  regular.value << 1.0;
  backbone.value << 1.0;
  regular.grad << 1.0;
  backbone.grad << 1.0;

  AdamW opt;
  // Zero backbone rate freezes the tensor entirely (update and decay both
  // scale with the rate).
  opt.step({&regular, &backbone}, 0.1, 0.0, 0.01);
  CHECK(backbone.value(0, 0) == 1.0);
  CHECK(regular.value(0, 0) < 1.0);
}

TEST_CASE("optimizer rejects a changed parameter list") {
  Tensor a("a", 1, 1), b("b", 1, 1);
  a.grad << 0.1;
  b.grad << 0.1;
  AdamW opt;
  opt.step({&a, &b}, 0.1, 0.1, 0.0);
  CHECK_THROWS_AS(opt.step({&a}, 0.1, 0.1, 0.0), ShapeError);
}

TEST_CASE("training produces a faithful run record and artifacts") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  AnticipationModel model(pipeline_config());
  model.init_params(0);

  TrainConfig tc = quick_schedule();
  tc.eval_split = "eval";
  sta_test::TempDir out("pipe_out");
  const RunRecord run = train(model, train_set, tc, out.path());

  REQUIRE(run.epochs.size() == 2);
  for (const EpochStats& e : run.epochs) {
    CHECK(e.steps == 2);  // 8 frames / batch 4
    CHECK(std::isfinite(e.mean_loss.total));
    CHECK(e.mean_loss.total > 0);
    CHECK(e.lr_base == tc.lr_base);  // no decay inside this short run
    REQUIRE(e.mean_loss.per_layer.size() == 1);
  }

  // Config snapshot embeds both configs.
  const nlohmann::json snap = nlohmann::json::parse(run.config_snapshot);
  CHECK(snap["model"]["d"] == 16);
  CHECK(snap["train"]["epochs"] == 2);

  // Artifacts on disk.
  CHECK(std::filesystem::exists(out.path() / "checkpoint.stc"));
  CHECK(std::filesystem::exists(out.path() / "run.json"));
  REQUIRE(run.checkpoints.size() == 1);

  // The eval split was scored in all four modes.
  REQUIRE(run.eval_reports.size() == 1);
  CHECK(run.eval_reports[0].report.map_by_mode.size() == 4);
  CHECK(run.eval_reports[0].report.frames_evaluated == 4);

  // run.json is valid JSON mirroring the record.
  std::ifstream is(out.path() / "run.json");
  nlohmann::json root;
  is >> root;
  CHECK(root["epochs"].size() == 2);
  CHECK(root["evals"].size() == 1);
  CHECK(root["checkpoints"].size() == 1);
  CHECK(root["config"]["model"]["num_layers"] == 1);

  // The checkpoint reloads and matches the dataset vocabularies.
  const LoadedCheckpoint ckpt = load_checkpoint(out.path() / "checkpoint.stc");
  CHECK_NOTHROW(require_vocab_match(ckpt, train_set));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  const Dataset eval_set = load_dataset(dataset_root(), "eval");

  auto run_once = [&](std::vector<FramePredictions>* preds) {
    AnticipationModel model(pipeline_config());
    model.init_params(0);
    const RunRecord run = train(model, train_set, quick_schedule());
    *preds = predict_dataset(model, eval_set, 6, 2);
    return run.epochs.back().mean_loss.total;
  };

  std::vector<FramePredictions> p1, p2;
  const Real l1 = run_once(&p1);
  const Real l2 = run_once(&p2);
  CHECK(l1 == l2);  // bitwise, not approximately

  sta_test::TempDir tmp("pipe_det");
  save_predictions(tmp.path() / "a.json", p1);
  save_predictions(tmp.path() / "b.json", p2);
  CHECK(slurp(tmp.path() / "a.json") == slurp(tmp.path() / "b.json"));
}

TEST_CASE("training reduces the loss on the tiny dataset") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  AnticipationModel model(pipeline_config());
  model.init_params(0);
  TrainConfig tc = quick_schedule();
  tc.epochs = 10;
  const RunRecord run = train(model, train_set, tc);
  REQUIRE(run.epochs.size() == 10);
  CHECK(run.epochs.back().mean_loss.total <
        run.epochs.front().mean_loss.total);
}

TEST_CASE("non-finite loss surfaces as a numeric error naming the batch") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  AnticipationModel model(pipeline_config());
  model.init_params(0);
  // Poison a parameter that sits after the encoder's input check so the NaN
  // reaches the loss rather than tripping an earlier guard.
  bool poisoned = false;
  for (Tensor* t : model.parameters()) {
    if (t->name == "terminal_norm.gamma") {
      t->value(0, 0) = std::numeric_limits<double>::quiet_NaN();
      poisoned = true;
    }
  }
  REQUIRE(poisoned);
  CHECK_THROWS_WITH_AS(train(model, train_set, quick_schedule()),
                       doctest::Contains("epoch"), NumericError);
}

TEST_CASE("max_steps stops training mid-run") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  AnticipationModel model(pipeline_config());
  model.init_params(0);
  TrainConfig tc = quick_schedule();
  tc.epochs = 50;
  tc.max_steps = 3;
  const RunRecord run = train(model, train_set, tc);
  int total_steps = 0;
  for (const EpochStats& e : run.epochs) total_steps += e.steps;
  CHECK(total_steps == 3);
  CHECK(run.epochs.size() == 2);  // 2 full batches, then 1 of the next epoch
}

TEST_CASE("prediction is pure and ordered by the manifest") {
  const Dataset eval_set = load_dataset(dataset_root(), "eval");
  AnticipationModel model(pipeline_config());
  model.init_params(9);

  ParamRefs params = model.parameters();
  std::vector<Mat> before;
  for (const Tensor* t : params) before.push_back(t->value);

  const auto preds = predict_dataset(model, eval_set, 6, 2);
  REQUIRE(preds.size() == eval_set.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].frame_id == eval_set.manifest.frame_ids[i]);
    // Scores are sorted descending within each frame.
    for (std::size_t j = 1; j < preds[i].predictions.size(); ++j)
      CHECK(preds[i].predictions[j - 1].score >=
            preds[i].predictions[j].score);
  }

  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(params[i]->value == before[i]);

  const auto again = predict_dataset(model, eval_set, 6, 2);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    REQUIRE(again[i].predictions.size() == preds[i].predictions.size());
    for (std::size_t j = 0; j < preds[i].predictions.size(); ++j)
      CHECK(again[i].predictions[j].score == preds[i].predictions[j].score);
  }
}

TEST_CASE("model evaluation equals scoring its own prediction dump") {
  const Dataset eval_set = load_dataset(dataset_root(), "eval");
  AnticipationModel model(pipeline_config());
  model.init_params(13);

  const EvalReport direct = evaluate_model(model, eval_set, 6, 2);
  const auto preds = predict_dataset(model, eval_set, 6, 2);
  const EvalReport via_list = evaluate_predictions(preds, eval_set.annotations);

  sta_test::TempDir tmp("pipe_eval");
  save_predictions(tmp.path() / "p.json", preds);
  const EvalReport via_file =
      evaluate_prediction_file(tmp.path() / "p.json", eval_set);

  for (MetricMode m : kAllMetricModes) {
    CHECK(direct.map_by_mode.at(m) == via_list.map_by_mode.at(m));
    CHECK(direct.map_by_mode.at(m) ==
          doctest::Approx(via_file.map_by_mode.at(m)).epsilon(1e-12));
  }
}

TEST_CASE("vocabulary mismatches between checkpoint and dataset are rejected") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  AnticipationModel model(pipeline_config());
  model.init_params(0);

  sta_test::TempDir tmp("pipe_vocab");
  const auto file = tmp.path() / "ckpt.stc";
  save_checkpoint(file, model, train_set.nouns.names(),
                  train_set.verbs.names());
  const LoadedCheckpoint good = load_checkpoint(file);
  CHECK_NOTHROW(require_vocab_match(good, train_set));

  // Same sizes, different names.
  save_checkpoint(file, model, {"a", "b", "c", "d"}, train_set.verbs.names());
  const LoadedCheckpoint bad = load_checkpoint(file);
  CHECK_THROWS_AS(require_vocab_match(bad, train_set), DataError);
}

TEST_CASE("candidate-count sweep trains and scores one model per count") {
  const Dataset train_set = load_dataset(dataset_root(), "train");
  const Dataset eval_set = load_dataset(dataset_root(), "eval");
  TrainConfig tc = quick_schedule();
  tc.epochs = 1;

  const auto records =
      sweep_candidate_counts({2, 4}, pipeline_config(), tc, train_set, eval_set);
  REQUIRE(records.size() == 2);
  CHECK(records[0].checkpoint == "candidates=2");
  CHECK(records[1].checkpoint == "candidates=4");
  for (const EvalRecord& r : records) {
    CHECK(r.report.map_by_mode.size() == 4);
    CHECK(r.report.frames_evaluated == 4);
  }
}

TEST_CASE("visualization writes an annotated copy of the frame") {
  const Dataset eval_set = load_dataset(dataset_root(), "eval");
  const std::string frame = eval_set.manifest.frame_ids[0];

  sta_test::TempDir tmp("pipe_vis");
  std::vector<FramePredictions> preds(1);
  preds[0].frame_id = frame;
  AnticipationPrediction p;
  p.box = {0.2, 0.2, 0.7, 0.7};
  p.noun_id = 0;
  p.verb_id = 1;
  p.ttc = 1.25;
  p.score = 0.9;
  preds[0].predictions.push_back(p);
  save_predictions(tmp.path() / "p.json", preds);

  const auto out = tmp.path() / "vis.png";
  visualize(frame, tmp.path() / "p.json", eval_set, out);
  const ImageBuffer img = load_image(out);
  CHECK(img.width == 32);
  CHECK(img.height == 32);

  // A frame with an empty prediction list still produces an output image.
  preds[0].predictions.clear();
  save_predictions(tmp.path() / "p.json", preds);
  const auto out2 = tmp.path() / "vis2.png";
  visualize(frame, tmp.path() / "p.json", eval_set, out2);
  CHECK(std::filesystem::exists(out2));

  // A frame absent from the prediction file is a data error.
  CHECK_THROWS_WITH_AS(
      visualize("eval_9999", tmp.path() / "p.json", eval_set, out2),
      doctest::Contains("eval_9999"), DataError);
}

TEST_CASE("training rejects an empty dataset") {
  Dataset empty;
  empty.nouns = Vocabulary({"a"});
  empty.verbs = Vocabulary({"b"});
  AnticipationModel model(pipeline_config());
  model.init_params(0);
  CHECK_THROWS_AS(train(model, empty, quick_schedule()), DataError);
}

}  // TEST_SUITE
