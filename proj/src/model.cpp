#include "sta/model.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace sta {

using nlohmann::json;

FrameInputs make_frame_inputs(const std::vector<DetectionCandidate>& top_k,
                              const Mat& grid_features) {
  const Eigen::Index k = Eigen::Index(top_k.size());
  FrameInputs in;
  in.boxes.resize(k, 4);
  in.noun_ids.resize(k);
  in.padding.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& c = top_k[std::size_t(i)];
    in.boxes(i, 0) = c.box.x1;
    in.boxes(i, 1) = c.box.y1;
    in.boxes(i, 2) = c.box.x2;
    in.boxes(i, 3) = c.box.y2;
    in.noun_ids(i) = c.noun_id;
    in.padding(i) = c.is_padding;
  }
  in.grid_features = grid_features;
  return in;
}

AnticipationModel::AnticipationModel(const ModelConfig& config)
    : config_((config.validate(), config)),
      box_encoder_(config.d),
      category_embedding_(config.v_noun, config.d),
      visual_projection_("visual_projection", config.backbone_dim(), config.d),
      encoder_(config.d, config.num_layers, config.num_heads, config.ffn_dim()),
      terminal_norm_("terminal_norm", config.d),
      heads_(config.d, config.v_verb) {
  visual_projection_.weight.backbone_group = true;
  visual_projection_.bias.backbone_group = true;
}

void AnticipationModel::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Tensor* t : parameters()) {
    if (t->name.ends_with(".gamma")) {
      t->value.setOnes();
    } else if (t->name.ends_with(".beta") || t->name.ends_with(".bias")) {
      t->value.setZero();
    } else {
      init_normal(*t, rng, 0.02);
    }
  }
}

std::vector<HeadOutputs> AnticipationModel::forward(const FrameInputs& in,
                                                    ModelTrace* trace) const {
  const Eigen::Index k = in.boxes.rows();
  if (in.noun_ids.size() != k || in.padding.size() != k)
    throw ShapeError("forward: boxes, noun_ids and padding disagree on k");

  Mat box_embed = box_encoder_.forward(in.boxes);
  Mat cat_embed = category_embedding_.forward(in.noun_ids);
  QueryMatrix query = build_query(box_embed, cat_embed, in.padding);
  Mat visual = visual_projection_.forward(in.grid_features);
  Mat q_prime = concat_queries(query, VisualTokens{visual});
  BoolVec key_mask = sequence_key_mask(in.padding, int(visual.rows()));

  EncoderTrace enc_trace;
  FusedSequence fused =
      encoder_.encode(q_prime, key_mask, trace ? &enc_trace : nullptr);

  std::vector<HeadOutputs> outputs;
  outputs.reserve(fused.per_layer.size());
  if (trace) {
    trace->inputs = in;
    trace->box_embed = std::move(box_embed);
    trace->cat_embed = std::move(cat_embed);
    trace->query = query;
    trace->visual = std::move(visual);
    trace->q_prime = std::move(q_prime);
    trace->key_mask = key_mask;
    trace->layers = std::move(enc_trace.layers);
    trace->layer_outputs = fused.per_layer;
    trace->head_norms.resize(fused.per_layer.size());
    trace->heads.resize(fused.per_layer.size());
  }

  for (std::size_t l = 0; l < fused.per_layer.size(); ++l) {
    Mat normed = terminal_norm_.forward(fused.per_layer[l].topRows(k),
                                        trace ? &trace->head_norms[l] : nullptr);
    outputs.push_back(heads_.forward(normed, trace ? &trace->heads[l] : nullptr));
  }
  return outputs;
}

void AnticipationModel::backward(const ModelTrace& trace,
                                 const std::vector<HeadGrads>& head_grads) {
  const Eigen::Index k = trace.inputs.boxes.rows();
  const int num_layers = encoder_.num_layers();
  if (head_grads.size() != std::size_t(num_layers))
    throw ShapeError("backward: expected one head gradient per encoder layer");

  Mat d_cur = Mat::Zero(trace.q_prime.rows(), trace.q_prime.cols());
  for (int l = num_layers - 1; l >= 0; --l) {
    Mat d_normed =
        heads_.backward(trace.heads[std::size_t(l)], head_grads[std::size_t(l)]);
    d_cur.topRows(k) +=
        terminal_norm_.backward(trace.head_norms[std::size_t(l)], d_normed);
    d_cur = encoder_.layer(l).backward(trace.layers[std::size_t(l)],
                                       trace.key_mask, d_cur);
  }

  const Mat d_query = d_cur.topRows(k);
  box_encoder_.backward(trace.inputs.boxes, d_query);
  category_embedding_.backward(trace.inputs.noun_ids, d_query);
  visual_projection_.backward(trace.inputs.grid_features,
                              d_cur.bottomRows(d_cur.rows() - k));
}

ParamRefs AnticipationModel::parameters() {
  ParamRefs params;
  params.push_back(&box_encoder_.linear().weight);
  params.push_back(&box_encoder_.linear().bias);
  params.push_back(&category_embedding_.table);
  params.push_back(&visual_projection_.weight);
  params.push_back(&visual_projection_.bias);
  encoder_.collect_params(params);
  params.push_back(&terminal_norm_.gamma);
  params.push_back(&terminal_norm_.beta);
  heads_.collect_params(params);
  return params;
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'C', 'H', 'K', 'P', 'T'};

json config_to_json(const ModelConfig& c) {
  return json{{"d", c.d},
              {"k_train", c.k_train},
              {"k_infer", c.k_infer},
              {"top_verbs", c.top_verbs},
              {"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"ff_dim", c.ff_dim},
              {"v_noun", c.v_noun},
              {"v_verb", c.v_verb},
              {"lambda_obj", c.lambda_obj},
              {"lambda_int", c.lambda_int},
              {"lambda_ttc", c.lambda_ttc},
              {"input_size", c.input_size},
              {"grid", c.grid}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int>();
  c.k_train = j.at("k_train").get<int>();
  c.k_infer = j.at("k_infer").get<int>();
  c.top_verbs = j.at("top_verbs").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.v_noun = j.at("v_noun").get<int>();
  c.v_verb = j.at("v_verb").get<int>();
  c.lambda_obj = j.at("lambda_obj").get<Real>();
  c.lambda_int = j.at("lambda_int").get<Real>();
  c.lambda_ttc = j.at("lambda_ttc").get<Real>();
  c.input_size = j.at("input_size").get<int>();
  c.grid = j.at("grid").get<int>();
  return c;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, AnticipationModel& model,
                     const std::vector<std::string>& noun_names,
                     const std::vector<std::string>& verb_names) {
  ParamRefs params = model.parameters();
  json tensors = json::array();
  for (const Tensor* t : params) {
    tensors.push_back({{"name", t->name},
                       {"rows", t->value.rows()},
                       {"cols", t->value.cols()}});
  }
  json header = {{"format_version", 1},
                 {"config", config_to_json(model.config())},
                 {"nouns", noun_names},
                 {"verbs", verb_names},
                 {"tensors", tensors}};
  const std::string header_str = header.dump();

  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + file.string());
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, header_str.size());
  os.write(header_str.data(), std::streamsize(header_str.size()));

  std::vector<double> buffer;
  for (const Tensor* t : params) {
    buffer.resize(std::size_t(t->value.size()));
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < t->value.rows(); ++r)
      for (Eigen::Index c = 0; c < t->value.cols(); ++c)
        buffer[idx++] = t->value(r, c);
    os.write(reinterpret_cast<const char*>(buffer.data()),
             std::streamsize(buffer.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed writing checkpoint: " + file.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + file.string());

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + file.string());

  const std::uint64_t header_len = read_u64(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), std::streamsize(header_len));
  if (!is) throw DataError("truncated checkpoint header: " + file.string());

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError("bad checkpoint header: " + std::string(e.what()));
  }
  if (header.at("format_version").get<int>() != 1)
    throw DataError("unsupported checkpoint format version");

  LoadedCheckpoint out;
  out.config = config_from_json(header.at("config"));
  out.noun_names = header.at("nouns").get<std::vector<std::string>>();
  out.verb_names = header.at("verbs").get<std::vector<std::string>>();
  out.model = std::make_unique<AnticipationModel>(out.config);

  ParamRefs params = out.model->parameters();
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw DataError("checkpoint tensor count does not match model");

  std::vector<double> buffer;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor* t = params[i];
    const json& entry = tensors[i];
    if (entry.at("name").get<std::string>() != t->name ||
        entry.at("rows").get<Eigen::Index>() != t->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != t->value.cols()) {
      throw DataError("checkpoint tensor mismatch at '" + t->name + "'");
    }
    buffer.resize(std::size_t(t->value.size()));
    is.read(reinterpret_cast<char*>(buffer.data()),
            std::streamsize(buffer.size() * sizeof(double)));
    if (!is) throw DataError("truncated checkpoint payload: " + file.string());
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < t->value.rows(); ++r)
      for (Eigen::Index c = 0; c < t->value.cols(); ++c)
        t->value(r, c) = buffer[idx++];
  }
  return out;
}

}  // namespace sta
