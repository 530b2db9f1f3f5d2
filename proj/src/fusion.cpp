#include "sta/fusion.hpp"

#include <cmath>

namespace sta {

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma(name + ".gamma", 1, dim), beta(name + ".beta", 1, dim) {
  gamma.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const Vec mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  const Vec var = centered.array().square().rowwise().mean().matrix();
  const Vec inv_std = (var.array() + kEps).rsqrt().matrix();
  Mat xhat = centered;
  xhat.array().colwise() *= inv_std.array();
  Mat y = xhat;
  y.array().rowwise() *= gamma.value.row(0).array();
  y.array().rowwise() += beta.value.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& d_out) {
  gamma.grad.row(0) +=
      (d_out.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += d_out.colwise().sum();

  // dx = (g - mean(g) - xhat * mean(g .* xhat)) * inv_std, per row.
  Mat g = d_out;
  g.array().rowwise() *= gamma.value.row(0).array();
  const Vec mean_g = g.rowwise().mean();
  const Vec mean_gx = (g.array() * cache.xhat.array()).rowwise().mean().matrix();
  Mat dx = g;
  dx.colwise() -= mean_g;
  Mat scaled_xhat = cache.xhat;
  scaled_xhat.array().colwise() *= mean_gx.array();
  dx -= scaled_xhat;
  dx.array().colwise() *= cache.inv_std.array();
  return dx;
}

EncoderLayer::EncoderLayer(const std::string& name, int d, int num_heads,
                           int ffn_dim)
    : d_(d),
      heads_(num_heads),
      ln1_(name + ".ln1", d),
      wq_(name + ".attn.q", d, d),
      wk_(name + ".attn.k", d, d),
      wv_(name + ".attn.v", d, d),
      wo_(name + ".attn.out", d, d),
      ln2_(name + ".ln2", d),
      ff1_(name + ".ffn.in", d, ffn_dim),
      ff2_(name + ".ffn.out", ffn_dim, d) {
  if (d % num_heads != 0)
    throw ConfigError("EncoderLayer: d must be divisible by num_heads");
}

Mat EncoderLayer::forward(const Mat& x, const BoolVec& key_mask,
                          EncoderLayerTrace* trace) const {
  const Eigen::Index n = x.rows();
  if (key_mask.size() != n)
    throw ShapeError("EncoderLayer: key mask length does not match rows");
  const int dh = d_ / heads_;
  const Real scale = Real(1) / std::sqrt(Real(dh));

  Mat xn1 = ln1_.forward(x, trace ? &trace->ln1 : nullptr);
  Mat qm = wq_.forward(xn1);
  Mat km = wk_.forward(xn1);
  Mat vm = wv_.forward(xn1);

  Mat attn_concat(n, d_);
  std::vector<Mat> probs(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    Mat scores =
        qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose() * scale;
    probs[std::size_t(h)] = masked_softmax_rows(scores, key_mask);
    attn_concat.middleCols(h * dh, dh).noalias() =
        probs[std::size_t(h)] * vm.middleCols(h * dh, dh);
  }
  Mat x_mid = x + wo_.forward(attn_concat);

  Mat xn2 = ln2_.forward(x_mid, trace ? &trace->ln2 : nullptr);
  Mat ffn_pre = ff1_.forward(xn2);
  Mat ffn_hidden = ffn_pre.cwiseMax(Real(0));
  Mat out = x_mid + ff2_.forward(ffn_hidden);

  if (trace) {
    trace->input = x;
    trace->xn1 = std::move(xn1);
    trace->qm = std::move(qm);
    trace->km = std::move(km);
    trace->vm = std::move(vm);
    trace->probs = std::move(probs);
    trace->attn_concat = std::move(attn_concat);
    trace->xn2 = std::move(xn2);
    trace->ffn_pre = std::move(ffn_pre);
    trace->ffn_hidden = std::move(ffn_hidden);
  }
  return out;
}

Mat EncoderLayer::backward(const EncoderLayerTrace& trace,
                           const BoolVec& key_mask, const Mat& d_out) {
  const Eigen::Index n = trace.input.rows();
  const int dh = d_ / heads_;
  const Real scale = Real(1) / std::sqrt(Real(dh));

  // Feed-forward sublayer.
  Mat d_hidden = ff2_.backward(trace.ffn_hidden, d_out);
  Mat d_pre = (trace.ffn_pre.array() > 0).select(d_hidden, Real(0));
  Mat d_xmid = d_out + ln2_.backward(trace.ln2, ff1_.backward(trace.xn2, d_pre));

  // Attention sublayer.
  Mat d_concat = wo_.backward(trace.attn_concat, d_xmid);
  Mat d_qm(n, d_), d_km(n, d_), d_vm(n, d_);
  for (int h = 0; h < heads_; ++h) {
    const auto vm_h = trace.vm.middleCols(h * dh, dh);
    const auto d_out_h = d_concat.middleCols(h * dh, dh);
    const Mat& p = trace.probs[std::size_t(h)];
    Mat d_p = d_out_h * vm_h.transpose();
    d_vm.middleCols(h * dh, dh).noalias() = p.transpose() * d_out_h;
    Mat d_scores = softmax_rows_backward(p, d_p);
    d_qm.middleCols(h * dh, dh).noalias() =
        d_scores * trace.km.middleCols(h * dh, dh) * scale;
    d_km.middleCols(h * dh, dh).noalias() =
        d_scores.transpose() * trace.qm.middleCols(h * dh, dh) * scale;
  }
  (void)key_mask;  // masked columns have p == 0, so their grads vanish above
  Mat d_xn1 = wq_.backward(trace.xn1, d_qm);
  d_xn1 += wk_.backward(trace.xn1, d_km);
  d_xn1 += wv_.backward(trace.xn1, d_vm);
  return d_xmid + ln1_.backward(trace.ln1, d_xn1);
}

void EncoderLayer::collect_params(ParamRefs& out) {
  out.push_back(&ln1_.gamma);
  out.push_back(&ln1_.beta);
  for (Linear* lin : {&wq_, &wk_, &wv_, &wo_}) {
    out.push_back(&lin->weight);
    out.push_back(&lin->bias);
  }
  out.push_back(&ln2_.gamma);
  out.push_back(&ln2_.beta);
  for (Linear* lin : {&ff1_, &ff2_}) {
    out.push_back(&lin->weight);
    out.push_back(&lin->bias);
  }
}

TransformerEncoder::TransformerEncoder(int d, int num_layers, int num_heads,
                                       int ffn_dim) {
  layers_.reserve(std::size_t(num_layers));
  for (int i = 0; i < num_layers; ++i) {
    layers_.emplace_back("encoder.layer" + std::to_string(i), d, num_heads,
                         ffn_dim);
  }
}

FusedSequence TransformerEncoder::encode(const Mat& q_prime,
                                         const BoolVec& key_mask,
                                         EncoderTrace* trace) const {
  if (!q_prime.allFinite())
    throw NumericError("encoder input contains non-finite values");
  FusedSequence fused;
  fused.q_prime = q_prime;
  fused.per_layer.reserve(layers_.size());
  if (trace) trace->layers.resize(layers_.size());

  Mat x = q_prime;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l].forward(x, key_mask, trace ? &trace->layers[l] : nullptr);
    fused.per_layer.push_back(x);
  }
  return fused;
}

void TransformerEncoder::collect_params(ParamRefs& out) {
  for (auto& layer : layers_) layer.collect_params(out);
}

Mat concat_queries(const QueryMatrix& q, const VisualTokens& v) {
  if (q.Q.cols() != v.V.cols())
    throw ShapeError("concat_queries: Q has dim " + std::to_string(q.Q.cols()) +
                     " but V has dim " + std::to_string(v.V.cols()));
  Mat out(q.Q.rows() + v.V.rows(), q.Q.cols());
  out.topRows(q.Q.rows()) = q.Q;
  out.bottomRows(v.V.rows()) = v.V;
  return out;
}

BoolVec sequence_key_mask(const BoolVec& query_padding, int num_tokens) {
  BoolVec mask = BoolVec::Constant(query_padding.size() + num_tokens, false);
  mask.head(query_padding.size()) = query_padding;
  return mask;
}

PredictionHeads::PredictionHeads(int d, int v_verb)
    : obj_("heads.obj", d, 1),
      verb_("heads.verb", d, v_verb),
      ttc1_("heads.ttc.l1", d, d),
      ttc2_("heads.ttc.l2", d, d),
      ttc3_("heads.ttc.l3", d, 1) {}

HeadOutputs PredictionHeads::forward(const Mat& query_rows,
                                     HeadTrace* trace) const {
  HeadOutputs out;
  const Eigen::Index k = query_rows.rows();

  Mat obj_logits = obj_.forward(query_rows);
  out.p_obj.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.p_obj(i) = std::clamp(sigmoid(obj_logits(i, 0)), kProbEps,
                              Real(1) - kProbEps);
  }

  Mat int_logits = verb_.forward(query_rows);
  out.p_int = softmax_rows(int_logits);

  Mat pre1 = ttc1_.forward(query_rows);
  Mat h1 = pre1.cwiseMax(Real(0));
  Mat pre2 = ttc2_.forward(h1);
  Mat h2 = pre2.cwiseMax(Real(0));
  Mat pre3 = ttc3_.forward(h2);
  out.ttc.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) out.ttc(i) = softplus(pre3(i, 0));

  if (trace) {
    trace->input = query_rows;
    trace->int_logits = std::move(int_logits);
    trace->ttc_pre1 = std::move(pre1);
    trace->ttc_h1 = std::move(h1);
    trace->ttc_pre2 = std::move(pre2);
    trace->ttc_h2 = std::move(h2);
    trace->ttc_pre3 = pre3.col(0);
    trace->out = out;
  }
  return out;
}

Mat PredictionHeads::backward(const HeadTrace& trace, const HeadGrads& grads) {
  // Object head: p = clamp(sigmoid(z)); dsigma = p (1 - p).
  Mat d_obj_logits(trace.input.rows(), 1);
  d_obj_logits.col(0) = (grads.d_p_obj.array() * trace.out.p_obj.array() *
                         (Real(1) - trace.out.p_obj.array()))
                            .matrix();
  Mat d_in = obj_.backward(trace.input, d_obj_logits);

  // Interaction head: softmax backward to logits.
  Mat d_int_logits = softmax_rows_backward(trace.out.p_int, grads.d_p_int);
  d_in += verb_.backward(trace.input, d_int_logits);

  // TTC head: softplus' then the MLP chain.
  Mat d_pre3(trace.input.rows(), 1);
  for (Eigen::Index i = 0; i < trace.input.rows(); ++i) {
    d_pre3(i, 0) = grads.d_ttc(i) * softplus_grad(trace.ttc_pre3(i));
  }
  Mat d_h2 = ttc3_.backward(trace.ttc_h2, d_pre3);
  Mat d_pre2 = (trace.ttc_pre2.array() > 0).select(d_h2, Real(0));
  Mat d_h1 = ttc2_.backward(trace.ttc_h1, d_pre2);
  Mat d_pre1 = (trace.ttc_pre1.array() > 0).select(d_h1, Real(0));
  d_in += ttc1_.backward(trace.input, d_pre1);
  return d_in;
}

Vec PredictionHeads::predict_object_prob(const Mat& query_rows) const {
  Mat logits = obj_.forward(query_rows);
  Vec p(query_rows.rows());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = std::clamp(sigmoid(logits(i, 0)), kProbEps, Real(1) - kProbEps);
  }
  return p;
}

Mat PredictionHeads::predict_interaction(const Mat& query_rows) const {
  return softmax_rows(verb_.forward(query_rows));
}

Vec PredictionHeads::predict_ttc(const Mat& query_rows) const {
  Mat h = ttc2_.forward(ttc1_.forward(query_rows).cwiseMax(Real(0)))
              .cwiseMax(Real(0));
  Mat pre = ttc3_.forward(h);
  Vec ttc(query_rows.rows());
  for (Eigen::Index i = 0; i < ttc.size(); ++i) ttc(i) = softplus(pre(i, 0));
  return ttc;
}

void PredictionHeads::collect_params(ParamRefs& out) {
  for (Linear* lin : {&obj_, &verb_, &ttc1_, &ttc2_, &ttc3_}) {
    out.push_back(&lin->weight);
    out.push_back(&lin->bias);
  }
}

Linear& PredictionHeads::ttc_layer(int i) {
  switch (i) {
    case 0: return ttc1_;
    case 1: return ttc2_;
    default: return ttc3_;
  }
}

}  // namespace sta
