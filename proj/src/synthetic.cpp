#include "sta/synthetic.hpp"

#include "sta/data.hpp"
#include "sta/detection.hpp"
#include "sta/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace sta {

namespace {

// splitmix64; decorrelates the per-frame streams from consecutive indices.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t split_tag,
                         std::uint64_t frame_idx) {
  return mix64(mix64(seed ^ mix64(split_tag)) ^ frame_idx);
}

struct Rgb {
  float r, g, b;
};

Rgb color_rgb(const std::string& name) {
  if (name == "red") return {0.85f, 0.10f, 0.10f};
  if (name == "green") return {0.10f, 0.70f, 0.15f};
  if (name == "blue") return {0.15f, 0.25f, 0.85f};
  if (name == "yellow") return {0.90f, 0.85f, 0.10f};
  if (name == "magenta") return {0.80f, 0.15f, 0.80f};
  if (name == "cyan") return {0.10f, 0.75f, 0.80f};
  // Unlisted palette entries get a stable pseudo-color off the name hash.
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) h = (h ^ std::uint64_t(c)) * 1099511628211ull;
  return {0.25f + 0.6f * float((h >> 8) & 0xff) / 255.0f,
          0.25f + 0.6f * float((h >> 24) & 0xff) / 255.0f,
          0.25f + 0.6f * float((h >> 40) & 0xff) / 255.0f};
}

struct PlacedObject {
  int x0, y0, size;  // pixel bbox, square
  int shape, color;  // palette indices
  BoundingBox normalized(int image_size) const {
    const Real s = Real(image_size);
    return {x0 / s, y0 / s, (x0 + size) / s, (y0 + size) / s};
  }
};

void draw_object(ImageBuffer& img, const PlacedObject& obj,
                 const std::string& shape_name, const Rgb& rgb) {
  const int x1 = obj.x0 + obj.size;
  const int y1 = obj.y0 + obj.size;
  const float cx = obj.x0 + 0.5f * obj.size;
  const float cy = obj.y0 + 0.5f * obj.size;
  const float r = 0.5f * obj.size;

  for (int y = obj.y0; y < y1; ++y) {
    for (int x = obj.x0; x < x1; ++x) {
      bool inside = true;
      if (shape_name == "circle") {
        const float dx = x + 0.5f - cx;
        const float dy = y + 0.5f - cy;
        inside = dx * dx + dy * dy <= r * r;
      } else if (shape_name == "triangle") {
        // Apex top-center, base along the bottom edge.
        const float frac = (y + 0.5f - obj.y0) / float(obj.size);
        const float half_width = frac * r;
        inside = std::abs(x + 0.5f - cx) <= half_width;
      }
      if (inside) {
        img.at(y, x, 0) = rgb.r;
        img.at(y, x, 1) = rgb.g;
        img.at(y, x, 2) = rgb.b;
      }
    }
  }
}

}  // namespace

SyntheticSceneSpec SyntheticSceneSpec::from_config(const KeyValueConfig& cfg) {
  cfg.require_known_keys({
      "seed", "image_size", "train_frames", "eval_frames", "min_objects",
      "max_objects", "shapes", "colors", "verbs", "min_size_px", "max_size_px",
      "ttc_base", "ttc_rate", "min_distractors", "max_distractors",
      "active_score_lo", "active_score_hi", "inactive_score_lo",
      "inactive_score_hi", "distractor_score_lo", "distractor_score_hi",
      "noise_std",
  });
  SyntheticSceneSpec spec;
  spec.seed = cfg.get_u64("seed", spec.seed);
  spec.image_size = cfg.get_int("image_size", spec.image_size);
  spec.train_frames = cfg.get_int("train_frames", spec.train_frames);
  spec.eval_frames = cfg.get_int("eval_frames", spec.eval_frames);
  spec.min_objects = cfg.get_int("min_objects", spec.min_objects);
  spec.max_objects = cfg.get_int("max_objects", spec.max_objects);
  spec.shapes = cfg.get_list("shapes", spec.shapes);
  spec.colors = cfg.get_list("colors", spec.colors);
  spec.verbs = cfg.get_list("verbs", spec.verbs);
  spec.min_size_px = cfg.get_int("min_size_px", spec.min_size_px);
  spec.max_size_px = cfg.get_int("max_size_px", spec.max_size_px);
  spec.ttc_base = cfg.get_real("ttc_base", spec.ttc_base);
  spec.ttc_rate = cfg.get_real("ttc_rate", spec.ttc_rate);
  spec.min_distractors = cfg.get_int("min_distractors", spec.min_distractors);
  spec.max_distractors = cfg.get_int("max_distractors", spec.max_distractors);
  spec.active_score_lo = cfg.get_real("active_score_lo", spec.active_score_lo);
  spec.active_score_hi = cfg.get_real("active_score_hi", spec.active_score_hi);
  spec.inactive_score_lo =
      cfg.get_real("inactive_score_lo", spec.inactive_score_lo);
  spec.inactive_score_hi =
      cfg.get_real("inactive_score_hi", spec.inactive_score_hi);
  spec.distractor_score_lo =
      cfg.get_real("distractor_score_lo", spec.distractor_score_lo);
  spec.distractor_score_hi =
      cfg.get_real("distractor_score_hi", spec.distractor_score_hi);
  spec.noise_std = cfg.get_real("noise_std", spec.noise_std);
  spec.validate();
  return spec;
}

void SyntheticSceneSpec::validate() const {
  if (image_size < 16)
    throw ConfigError("synthetic: image_size must be >= 16");
  if (train_frames < 1 || eval_frames < 1)
    throw ConfigError("synthetic: both splits need at least one frame");
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("synthetic: need 1 <= min_objects <= max_objects");
  if (shapes.empty() || colors.empty() || verbs.empty())
    throw ConfigError("synthetic: shapes, colors and verbs must be non-empty");
  if (verbs.size() != 4)
    throw ConfigError(
        "synthetic: exactly four verbs required (one per quadrant)");
  if (min_size_px < 4 || max_size_px < min_size_px ||
      max_size_px > image_size)
    throw ConfigError("synthetic: need 4 <= min_size_px <= max_size_px <= "
                      "image_size");
  if (!(ttc_base > 0)) throw ConfigError("synthetic: ttc_base must be > 0");
  if (ttc_rate < 0) throw ConfigError("synthetic: ttc_rate must be >= 0");
  if (min_distractors < 0 || max_distractors < min_distractors)
    throw ConfigError("synthetic: need 0 <= min_distractors <= max_distractors");
  for (auto [lo, hi] : {std::pair{active_score_lo, active_score_hi},
                        std::pair{inactive_score_lo, inactive_score_hi},
                        std::pair{distractor_score_lo, distractor_score_hi}}) {
    if (lo < 0 || hi > 1 || lo > hi)
      throw ConfigError("synthetic: score bands must satisfy 0 <= lo <= hi <= 1");
  }
  if (noise_std < 0) throw ConfigError("synthetic: noise_std must be >= 0");
}

std::vector<std::string> SyntheticSceneSpec::noun_names() const {
  std::vector<std::string> names;
  names.reserve(std::size_t(num_nouns()));
  for (const std::string& color : colors)
    for (const std::string& shape : shapes) names.push_back(color + "_" + shape);
  return names;
}

Real SyntheticSceneSpec::ttc_for_area(Real normalized_area) const {
  return ttc_base + ttc_rate * std::sqrt(normalized_area);
}

int SyntheticSceneSpec::verb_for_center(Real cx, Real cy) const {
  const int right = cx >= Real(0.5) ? 1 : 0;
  const int bottom = cy >= Real(0.5) ? 1 : 0;
  return bottom * 2 + right;
}

namespace {

void generate_split(const SyntheticSceneSpec& spec,
                    const std::filesystem::path& out_root,
                    const std::string& split, int frames,
                    std::uint64_t split_tag, const Vocabulary& nouns,
                    const Vocabulary& verbs) {
  const std::filesystem::path split_dir = out_root / split;
  std::filesystem::create_directories(split_dir / "frames");

  std::vector<std::string> frame_ids;
  std::vector<StaAnnotation> annotations;
  FixtureDetections detections;

  char id_buf[64];
  for (int f = 0; f < frames; ++f) {
    std::snprintf(id_buf, sizeof(id_buf), "%s_%04d", split.c_str(), f);
    const std::string frame_id = id_buf;
    frame_ids.push_back(frame_id);

    std::mt19937_64 rng(frame_seed(spec.seed, split_tag, std::uint64_t(f)));
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    ImageBuffer img = ImageBuffer::filled(spec.image_size, spec.image_size,
                                          0.78f, 0.78f, 0.78f);
    if (spec.noise_std > 0) {
      std::normal_distribution<float> noise(0.0f, float(spec.noise_std));
      for (float& v : img.rgb) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    }

    std::uniform_int_distribution<int> object_count(spec.min_objects,
                                                    spec.max_objects);
    std::uniform_int_distribution<int> size_dist(spec.min_size_px,
                                                 spec.max_size_px);
    std::uniform_int_distribution<int> shape_dist(0, int(spec.shapes.size()) - 1);
    std::uniform_int_distribution<int> color_dist(0, int(spec.colors.size()) - 1);

    const int n_objects = object_count(rng);
    std::vector<PlacedObject> objects;
    objects.reserve(std::size_t(n_objects));
    for (int i = 0; i < n_objects; ++i) {
      PlacedObject obj;
      obj.size = size_dist(rng);
      std::uniform_int_distribution<int> pos(0, spec.image_size - obj.size);
      obj.x0 = pos(rng);
      obj.y0 = pos(rng);
      obj.shape = shape_dist(rng);
      obj.color = color_dist(rng);
      objects.push_back(obj);
      draw_object(img, obj, spec.shapes[std::size_t(obj.shape)],
                  color_rgb(spec.colors[std::size_t(obj.color)]));
    }

    // Active object: largest box area, first placed on ties.
    std::size_t active = 0;
    for (std::size_t i = 1; i < objects.size(); ++i) {
      if (objects[i].size > objects[active].size) active = i;
    }

    const auto noun_of = [&](const PlacedObject& o) {
      return nouns.id(spec.colors[std::size_t(o.color)] + "_" +
                      spec.shapes[std::size_t(o.shape)]);
    };

    const PlacedObject& act = objects[active];
    const BoundingBox act_box = act.normalized(spec.image_size);
    StaAnnotation ann;
    ann.frame_id = frame_id;
    StaTarget target;
    target.box = act_box;
    target.noun_id = noun_of(act);
    target.verb_id = spec.verb_for_center(act_box.cx(), act_box.cy());
    target.ttc = spec.ttc_for_area(act_box.area());
    ann.targets.push_back(target);
    annotations.push_back(std::move(ann));

    const auto uniform_score = [&](Real lo, Real hi) {
      return lo + (hi - lo) * Real(unit(rng));
    };

    std::vector<DetectionCandidate> cands;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      DetectionCandidate c;
      c.box = objects[i].normalized(spec.image_size);
      c.noun_id = noun_of(objects[i]);
      c.det_score = i == active
                        ? uniform_score(spec.active_score_lo,
                                        spec.active_score_hi)
                        : uniform_score(spec.inactive_score_lo,
                                        spec.inactive_score_hi);
      cands.push_back(c);
    }
    std::uniform_int_distribution<int> distractor_count(spec.min_distractors,
                                                        spec.max_distractors);
    std::uniform_int_distribution<int> noun_dist(0, nouns.size() - 1);
    const int n_distractors = distractor_count(rng);
    for (int i = 0; i < n_distractors; ++i) {
      DetectionCandidate c;
      const int size = size_dist(rng);
      std::uniform_int_distribution<int> pos(0, spec.image_size - size);
      const int x0 = pos(rng);
      const int y0 = pos(rng);
      c.box = PlacedObject{x0, y0, size, 0, 0}.normalized(spec.image_size);
      c.noun_id = noun_dist(rng);
      c.det_score =
          uniform_score(spec.distractor_score_lo, spec.distractor_score_hi);
      cands.push_back(c);
    }
    detections.insert(frame_id, std::move(cands));

    save_image(split_dir / "frames" / (frame_id + ".png"), img);
  }

  save_annotations(split_dir / "annotations.json", annotations, nouns, verbs);
  detections.save(split_dir / "detections.json");

  std::ofstream os(split_dir / "manifest.json");
  if (!os)
    throw DataError("cannot write manifest: " +
                    (split_dir / "manifest.json").string());
  os << "{\n  \"frame_ids\": [";
  for (std::size_t i = 0; i < frame_ids.size(); ++i) {
    os << (i ? ", " : "") << '"' << frame_ids[i] << '"';
  }
  os << "]\n}\n";
}

}  // namespace

void generate_synthetic(const SyntheticSceneSpec& spec,
                        const std::filesystem::path& out_root) {
  spec.validate();
  std::filesystem::create_directories(out_root);

  Vocabulary nouns(spec.noun_names());
  Vocabulary verbs(spec.verbs);
  nouns.save(out_root / "nouns.txt");
  verbs.save(out_root / "verbs.txt");

  generate_split(spec, out_root, "train", spec.train_frames, 0x7261696eull,
                 nouns, verbs);
  generate_split(spec, out_root, "eval", spec.eval_frames, 0x6576616cull, nouns,
                 verbs);
}

}  // namespace sta
