#pragma once

// The transformer encoder over Q' = [Q; V] and the three prediction heads.
// Layers are pre-LN: layer norm before the attention and feed-forward
// sublayers, each wrapped in a residual connection. Padding query rows are
// masked out as attention keys but keep their rows for shape stability.

#include "sta/encoding.hpp"
#include "sta/math.hpp"
#include "sta/param.hpp"

#include <vector>

namespace sta {

/// Row-wise layer normalization with learned gain and shift.
class LayerNorm {
 public:
  LayerNorm(const std::string& name, int dim);

  struct Cache {
    Mat xhat;     // normalized input
    Vec inv_std;  // per-row 1/sqrt(var + eps)
  };

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& d_out);

  Tensor gamma;  // 1 x dim
  Tensor beta;   // 1 x dim

  static constexpr Real kEps = 1e-5;
};

struct EncoderLayerTrace {
  Mat input;
  LayerNorm::Cache ln1;
  Mat xn1;                 // LN1 output
  Mat qm, km, vm;          // attention projections
  std::vector<Mat> probs;  // per-head attention probabilities, n x n
  Mat attn_concat;         // concatenated head outputs
  LayerNorm::Cache ln2;
  Mat xn2;                 // LN2 output
  Mat ffn_pre;             // before ReLU
  Mat ffn_hidden;          // after ReLU
};

/// One pre-LN encoder layer: multi-head self-attention + feed-forward.
class EncoderLayer {
 public:
  EncoderLayer(const std::string& name, int d, int num_heads, int ffn_dim);

  /// key_mask marks rows that must not be attended to (padding queries).
  Mat forward(const Mat& x, const BoolVec& key_mask,
              EncoderLayerTrace* trace = nullptr) const;
  Mat backward(const EncoderLayerTrace& trace, const BoolVec& key_mask,
               const Mat& d_out);

  void collect_params(ParamRefs& out);

 private:
  int d_;
  int heads_;
  LayerNorm ln1_;
  Linear wq_, wk_, wv_, wo_;
  LayerNorm ln2_;
  Linear ff1_, ff2_;
};

/// All L per-layer outputs of the encoder; per_layer[l] is the residual
/// stream after layer l (no terminal norm applied).
struct FusedSequence {
  Mat q_prime;
  std::vector<Mat> per_layer;
};

struct EncoderTrace {
  std::vector<EncoderLayerTrace> layers;
};

class TransformerEncoder {
 public:
  TransformerEncoder(int d, int num_layers, int num_heads, int ffn_dim);

  /// Throws NumericError on non-finite input.
  FusedSequence encode(const Mat& q_prime, const BoolVec& key_mask,
                       EncoderTrace* trace = nullptr) const;

  int num_layers() const { return int(layers_.size()); }
  EncoderLayer& layer(int i) { return layers_[i]; }
  void collect_params(ParamRefs& out);

 private:
  std::vector<EncoderLayer> layers_;
};

/// Stacks Q on top of V; rows 0..k-1 are queries, k..k+T-1 visual tokens.
/// Throws ShapeError on embedding-dimension mismatch.
Mat concat_queries(const QueryMatrix& q, const VisualTokens& v);

/// Attention key mask for the concatenated sequence: padding query rows are
/// masked, visual rows never are.
BoolVec sequence_key_mask(const BoolVec& query_padding, int num_tokens);

/// Per-query head outputs at one layer.
struct HeadOutputs {
  Vec p_obj;  // k, each in (0,1)
  Mat p_int;  // k x v_verb, rows on the probability simplex
  Vec ttc;    // k, strictly positive seconds
};

struct HeadTrace {
  Mat input;  // k x d rows the heads were applied to
  Mat int_logits;
  Mat ttc_pre1, ttc_h1;  // first MLP layer, pre/post ReLU
  Mat ttc_pre2, ttc_h2;
  Vec ttc_pre3;  // softplus input
  HeadOutputs out;
};

/// Gradients of a scalar loss w.r.t. one layer's head outputs.
struct HeadGrads {
  Vec d_p_obj;
  Mat d_p_int;
  Vec d_ttc;
};

/// The three heads, shared across every layer's output: a sigmoid linear
/// for next-active-object probability, a softmax linear for the interaction
/// distribution, and a three-layer MLP (ReLU between, softplus at the end)
/// for time-to-contact.
class PredictionHeads {
 public:
  PredictionHeads(int d, int v_verb);

  HeadOutputs forward(const Mat& query_rows, HeadTrace* trace = nullptr) const;
  /// Returns the gradient w.r.t. the head input rows.
  Mat backward(const HeadTrace& trace, const HeadGrads& grads);

  // Individual heads, applied to the first k rows of a layer output.
  Vec predict_object_prob(const Mat& query_rows) const;
  Mat predict_interaction(const Mat& query_rows) const;
  Vec predict_ttc(const Mat& query_rows) const;

  void collect_params(ParamRefs& out);

  Linear& obj_head() { return obj_; }
  Linear& verb_head() { return verb_; }
  Linear& ttc_layer(int i);

  /// Sigmoid outputs are clamped into [kProbEps, 1 - kProbEps] so p_obj
  /// stays in the open interval even for saturated logits.
  static constexpr Real kProbEps = 1e-12;

 private:
  Linear obj_;
  Linear verb_;
  Linear ttc1_, ttc2_, ttc3_;
};

}  // namespace sta
