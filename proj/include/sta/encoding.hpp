#pragma once

// Second-stage inputs: the active-object query matrix Q built from boxes and
// categories, and the visual token matrix V built from the frame.

#include "sta/image.hpp"
#include "sta/param.hpp"
#include "sta/types.hpp"

#include <memory>
#include <string>

namespace sta {

/// k x d query matrix with its padding mask (true = padding row).
struct QueryMatrix {
  Mat Q;
  BoolVec padding;
};

/// T x d visual token matrix.
struct VisualTokens {
  Mat V;
};

/// Generic affine map y = x W + b applied row-wise. The workhorse for the
/// box encoder, visual projection, attention projections and all heads.
class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim);

  /// Throws ShapeError when the input column count does not match.
  Mat forward(const Mat& x) const;
  /// Accumulates parameter gradients and returns the input gradient.
  Mat backward(const Mat& x, const Mat& d_out);

  int in_dim() const { return int(weight.value.rows()); }
  int out_dim() const { return int(weight.value.cols()); }

  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

/// Single linear layer over raw (x1,y1,x2,y2) normalized coordinates.
class BoxEncoder {
 public:
  explicit BoxEncoder(int d);

  /// boxes: k x 4 -> B: k x d.
  Mat forward(const Mat& boxes) const { return linear_.forward(boxes); }
  Mat backward(const Mat& boxes, const Mat& d_out) {
    return linear_.backward(boxes, d_out);
  }

  Linear& linear() { return linear_; }
  const Linear& linear() const { return linear_; }

 private:
  Linear linear_;
};

/// Lookup table of size (v_noun + 1) x d; the last row is the reserved
/// padding embedding.
class CategoryEmbedding {
 public:
  CategoryEmbedding(int v_noun, int d);

  /// Throws ConfigError when an id is outside [0, v_noun].
  Mat forward(const IntVec& noun_ids) const;
  void backward(const IntVec& noun_ids, const Mat& d_out);

  int vocab() const { return v_noun_; }
  Tensor table;  // (v_noun + 1) x d

 private:
  int v_noun_;
};

/// Q = B + C elementwise; the padding mask is passed through.
QueryMatrix build_query(const Mat& box_embed, const Mat& category_embed,
                        const BoolVec& padding);

/// Frame -> grid features (T x d_v, pre-projection). Implementations must be
/// pure; an adapter for a pretrained encoder plugs in behind this interface.
class VisualBackbone {
 public:
  virtual ~VisualBackbone() = default;
  virtual int tokens() const = 0;
  virtual int feature_dim() const = 0;
  virtual Mat grid_features(const ImageBuffer& frame) const = 0;
};

/// Splits the frame into a fixed grid and flattens each patch (row-major
/// pixels, RGB interleaved). No learned state; the learned projection to the
/// model dimension is applied afterwards by extract_visual_tokens.
class ToyPatchifyBackbone : public VisualBackbone {
 public:
  ToyPatchifyBackbone(int input_size, int grid);

  int tokens() const override { return grid_ * grid_; }
  int feature_dim() const override { return 3 * patch_ * patch_; }
  int input_size() const { return input_size_; }

  /// Throws DataError when the frame is not input_size x input_size.
  Mat grid_features(const ImageBuffer& frame) const override;

 private:
  int input_size_;
  int grid_;
  int patch_;
};

/// Grid features mapped through one learned affine layer to T x d.
VisualTokens extract_visual_tokens(const VisualBackbone& backbone,
                                   const Linear& projection,
                                   const ImageBuffer& frame);

}  // namespace sta
