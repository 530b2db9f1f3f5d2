#include "sta/inference.hpp"

#include "oracles.hpp"
#include "util.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace sta;

namespace {

DetectionCandidate cand(BoundingBox box, int noun, double score) {
  DetectionCandidate c;
  c.box = box;
  c.noun_id = noun;
  c.det_score = score;
  return c;
}

DetectionCandidate padding() {
  DetectionCandidate c;
  c.is_padding = true;
  return c;
}

HeadOutputs make_heads(std::initializer_list<double> p_obj,
                       std::initializer_list<std::initializer_list<double>> p_int,
                       std::initializer_list<double> ttc) {
  HeadOutputs h;
  h.p_obj = Vec(Eigen::Index(p_obj.size()));
  Eigen::Index i = 0;
  for (double v : p_obj) h.p_obj(i++) = v;
  h.p_int = Mat(Eigen::Index(p_int.size()),
                Eigen::Index(p_int.begin()->size()));
  i = 0;
  for (const auto& row : p_int) {
    Eigen::Index j = 0;
    for (double v : row) h.p_int(i, j++) = v;
    ++i;
  }
  h.ttc = Vec(Eigen::Index(ttc.size()));
  i = 0;
  for (double v : ttc) h.ttc(i++) = v;
  return h;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("scores are detector confidence times verb probability") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.5, 0.5}, 2, 0.8)};
  const HeadOutputs heads =
      make_heads({0.9}, {{0.5, 0.3, 0.15, 0.05}}, {1.75});

  const FramePredictions out = score_predictions("f", cands, heads, 2);
  REQUIRE(out.predictions.size() == 2);
  CHECK(out.frame_id == "f");
  CHECK(out.predictions[0].score == doctest::Approx(0.8 * 0.5));
  CHECK(out.predictions[0].verb_id == 0);
  CHECK(out.predictions[0].noun_id == 2);
  CHECK(out.predictions[0].ttc == 1.75);
  CHECK(out.predictions[0].box == cands[0].box);
  CHECK(out.predictions[1].score == doctest::Approx(0.8 * 0.3));
  CHECK(out.predictions[1].verb_id == 1);
}

TEST_CASE("optional objectness factor multiplies into the score") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.5, 0.5}, 0, 0.8)};
  const HeadOutputs heads = make_heads({0.25}, {{0.6, 0.4}}, {1.0});

  const FramePredictions plain = score_predictions("f", cands, heads, 1, false);
  const FramePredictions mult = score_predictions("f", cands, heads, 1, true);
  CHECK(plain.predictions[0].score == doctest::Approx(0.8 * 0.6));
  CHECK(mult.predictions[0].score == doctest::Approx(0.8 * 0.6 * 0.25));
}

TEST_CASE("padding queries produce no predictions") {
  std::vector<DetectionCandidate> cands = {cand({0.1, 0.1, 0.4, 0.4}, 1, 0.7),
                                           padding(), padding()};
  const HeadOutputs heads = make_heads({0.5, 0.5, 0.5},
                                       {{0.7, 0.3}, {0.9, 0.1}, {0.8, 0.2}},
                                       {1.0, 1.0, 1.0});
  const FramePredictions out = score_predictions("f", cands, heads, 2);
  CHECK(out.predictions.size() == 2);  // only the real candidate contributes
  for (const auto& p : out.predictions) CHECK(p.noun_id == 1);
}

TEST_CASE("a frame of only padding yields no predictions and no final one") {
  std::vector<DetectionCandidate> cands = {padding(), padding()};
  const HeadOutputs heads =
      make_heads({0.5, 0.5}, {{0.6, 0.4}, {0.6, 0.4}}, {1.0, 1.0});
  const FramePredictions out = score_predictions("f", cands, heads, 1);
  CHECK(out.predictions.empty());
  CHECK_FALSE(final_prediction(out).has_value());
}

TEST_CASE("final prediction is the top-scoring entry") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.4, 0.4}, 1, 0.5), cand({0.5, 0.5, 0.9, 0.9}, 3, 0.9)};
  const HeadOutputs heads =
      make_heads({0.5, 0.5}, {{0.2, 0.8}, {0.9, 0.1}}, {1.0, 2.0});
  const FramePredictions out = score_predictions("f", cands, heads, 2);
  const auto top = final_prediction(out);
  REQUIRE(top.has_value());
  // 0.9 * 0.9 = 0.81 beats 0.5 * 0.8 = 0.4.
  CHECK(top->noun_id == 3);
  CHECK(top->verb_id == 0);
  CHECK(top->score == doctest::Approx(0.81));
}

TEST_CASE("verb count outside the vocabulary is a config error") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.4, 0.4}, 0, 0.5)};
  const HeadOutputs heads = make_heads({0.5}, {{0.5, 0.3, 0.2}}, {1.0});
  CHECK_THROWS_WITH_AS(score_predictions("f", cands, heads, 4),
                       doctest::Contains("exceeds verb vocabulary"),
                       ConfigError);
  CHECK_THROWS_AS(score_predictions("f", cands, heads, 0), ConfigError);
  CHECK_NOTHROW(score_predictions("f", cands, heads, 3));
}

TEST_CASE("head outputs must cover every candidate") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.4, 0.4}, 0, 0.5), cand({0.2, 0.2, 0.5, 0.5}, 1, 0.6)};
  const HeadOutputs heads = make_heads({0.5}, {{0.5, 0.5}}, {1.0});
  CHECK_THROWS_AS(score_predictions("f", cands, heads, 1), ShapeError);
}

TEST_CASE("score ties break by query index then verb index") {
  // Two identical candidates and a uniform verb distribution: all four
  // entries share one score, so the output order must be (q0,v0), (q0,v1),
  // (q1,v0), (q1,v1).
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.4, 0.4}, 0, 0.5), cand({0.1, 0.1, 0.4, 0.4}, 1, 0.5)};
  const HeadOutputs heads =
      make_heads({0.5, 0.5}, {{0.5, 0.5}, {0.5, 0.5}}, {1.0, 2.0});
  const FramePredictions out = score_predictions("f", cands, heads, 2);
  REQUIRE(out.predictions.size() == 4);
  CHECK(out.predictions[0].noun_id == 0);
  CHECK(out.predictions[0].verb_id == 0);
  CHECK(out.predictions[1].noun_id == 0);
  CHECK(out.predictions[1].verb_id == 1);
  CHECK(out.predictions[2].noun_id == 1);
  CHECK(out.predictions[2].verb_id == 0);
  CHECK(out.predictions[3].noun_id == 1);
  CHECK(out.predictions[3].verb_id == 1);
}

TEST_CASE("equal verb probabilities keep the lower verb id") {
  const std::vector<DetectionCandidate> cands = {
      cand({0.1, 0.1, 0.4, 0.4}, 0, 1.0)};
  const HeadOutputs heads = make_heads({0.5}, {{0.25, 0.25, 0.25, 0.25}}, {1.0});
  const FramePredictions out = score_predictions("f", cands, heads, 2);
  REQUIRE(out.predictions.size() == 2);
  CHECK(out.predictions[0].verb_id == 0);
  CHECK(out.predictions[1].verb_id == 1);
}

TEST_CASE("scoring agrees with the brute-force oracle on random frames") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> n_cands(0, 6);
  std::uniform_int_distribution<int> noun(0, 4);
  std::bernoulli_distribution pad(0.3);
  std::bernoulli_distribution use_obj(0.5);

  for (int trial = 0; trial < 200; ++trial) {
    const int v_verb = 2 + int(rng() % 4);
    const int k = n_cands(rng) + 1;
    std::vector<DetectionCandidate> cands;
    HeadOutputs heads;
    heads.p_obj = Vec(k);
    heads.p_int = Mat(k, v_verb);
    heads.ttc = Vec(k);
    for (int i = 0; i < k; ++i) {
      if (pad(rng)) {
        cands.push_back(padding());
      } else {
        cands.push_back(cand(sta_test::random_box(rng), noun(rng), uni(rng)));
      }
      heads.p_obj(i) = 0.02 + 0.96 * uni(rng);
      double sum = 0;
      for (int v = 0; v < v_verb; ++v) {
        heads.p_int(i, v) = 0.05 + uni(rng);
        sum += heads.p_int(i, v);
      }
      heads.p_int.row(i) /= sum;
      heads.ttc(i) = 0.1 + 3.0 * uni(rng);
    }
    const int top_k = 1 + int(rng() % v_verb);
    const bool mult = use_obj(rng);

    const FramePredictions got =
        score_predictions("f", cands, heads, top_k, mult);
    const auto expect =
        sta_test::oracle_score(cands, heads, top_k, mult);
    REQUIRE(got.predictions.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(got.predictions[i].box == expect[i].box);
      CHECK(got.predictions[i].noun_id == expect[i].noun_id);
      CHECK(got.predictions[i].verb_id == expect[i].verb_id);
      CHECK(got.predictions[i].ttc == expect[i].ttc);
      CHECK(got.predictions[i].score == expect[i].score);
    }
  }
}

TEST_CASE("uniformly scaling detector scores preserves the ranking") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<DetectionCandidate> cands;
  HeadOutputs heads;
  const int k = 6, v_verb = 4;
  heads.p_obj = Vec(k);
  heads.p_int = Mat(k, v_verb);
  heads.ttc = Vec(k);
  for (int i = 0; i < k; ++i) {
    cands.push_back(cand(sta_test::random_box(rng), i, 0.1 + 0.8 * uni(rng)));
    heads.p_obj(i) = uni(rng);
    double sum = 0;
    for (int v = 0; v < v_verb; ++v) {
      heads.p_int(i, v) = 0.1 + uni(rng);
      sum += heads.p_int(i, v);
    }
    heads.p_int.row(i) /= sum;
    heads.ttc(i) = 1.0;
  }

  const FramePredictions base = score_predictions("f", cands, heads, 3);
  // Halving every sigma (an exact binary scaling) must halve every score
  // and leave the order untouched.
  std::vector<DetectionCandidate> scaled = cands;
  for (auto& c : scaled) c.det_score *= 0.5;
  const FramePredictions half = score_predictions("f", scaled, heads, 3);
  REQUIRE(half.predictions.size() == base.predictions.size());
  for (std::size_t i = 0; i < base.predictions.size(); ++i) {
    CHECK(half.predictions[i].noun_id == base.predictions[i].noun_id);
    CHECK(half.predictions[i].verb_id == base.predictions[i].verb_id);
    CHECK(half.predictions[i].score ==
          doctest::Approx(0.5 * base.predictions[i].score).epsilon(1e-15));
  }
}

TEST_CASE("prediction files round trip exactly") {
  sta_test::TempDir tmp("pred");
  const auto file = tmp.path() / "predictions.json";

  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<FramePredictions> frames;
  for (int f = 0; f < 3; ++f) {
    FramePredictions fp;
    fp.frame_id = "frame_" + std::to_string(f);
    for (int i = 0; i < f; ++i) {
      AnticipationPrediction p;
      p.box = sta_test::random_box(rng);
      p.noun_id = int(rng() % 5);
      p.verb_id = int(rng() % 4);
      p.ttc = 3.0 * uni(rng);
      p.score = uni(rng);
      fp.predictions.push_back(p);
    }
    frames.push_back(fp);
  }

  save_predictions(file, frames);
  const auto loaded = load_predictions(file);
  REQUIRE(loaded.size() == frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    CHECK(loaded[f].frame_id == frames[f].frame_id);
    REQUIRE(loaded[f].predictions.size() == frames[f].predictions.size());
    for (std::size_t i = 0; i < frames[f].predictions.size(); ++i) {
      // Shortest-round-trip serialization keeps doubles bit-exact.
      CHECK(loaded[f].predictions[i].box == frames[f].predictions[i].box);
      CHECK(loaded[f].predictions[i].ttc == frames[f].predictions[i].ttc);
      CHECK(loaded[f].predictions[i].score == frames[f].predictions[i].score);
      CHECK(loaded[f].predictions[i].noun_id == frames[f].predictions[i].noun_id);
      CHECK(loaded[f].predictions[i].verb_id == frames[f].predictions[i].verb_id);
    }
  }

  // Saving the loaded copy reproduces the file byte for byte.
  const auto file2 = tmp.path() / "predictions2.json";
  save_predictions(file2, loaded);
  CHECK(slurp(file) == slurp(file2));
}

TEST_CASE("bad prediction files raise data errors") {
  sta_test::TempDir tmp("pred_bad");
  const auto file = tmp.path() / "p.json";
  std::ofstream(file) << "{\"not\": \"an array\"}";
  CHECK_THROWS_AS(load_predictions(file), DataError);
  std::ofstream(file) << "[{\"frame_id\": \"f\", \"predictions\": "
                         "[{\"box\": [0.1, 0.2], \"noun_id\": 0}]}]";
  CHECK_THROWS_AS(load_predictions(file), DataError);
  CHECK_THROWS_AS(load_predictions(tmp.path() / "absent.json"), DataError);
}

}  // TEST_SUITE
