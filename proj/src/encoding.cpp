#include "sta/encoding.hpp"

#include <string>

namespace sta {

Linear::Linear(std::string name, int in_dim, int out_dim)
    : weight(name + ".weight", in_dim, out_dim), bias(name + ".bias", 1, out_dim) {}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != weight.value.rows())
    throw ShapeError(weight.name + ": input has " + std::to_string(x.cols()) +
                     " columns, expected " + std::to_string(weight.value.rows()));
  return (x * weight.value).rowwise() + bias.value.row(0);
}

Mat Linear::backward(const Mat& x, const Mat& d_out) {
  weight.grad.noalias() += x.transpose() * d_out;
  bias.grad.row(0) += d_out.colwise().sum();
  return d_out * weight.value.transpose();
}

BoxEncoder::BoxEncoder(int d) : linear_("box_encoder", 4, d) {}

CategoryEmbedding::CategoryEmbedding(int v_noun, int d)
    : table("noun_embedding.table", v_noun + 1, d), v_noun_(v_noun) {}

Mat CategoryEmbedding::forward(const IntVec& noun_ids) const {
  Mat out(noun_ids.size(), table.value.cols());
  for (Eigen::Index i = 0; i < noun_ids.size(); ++i) {
    const int id = noun_ids(i);
    if (id < 0 || id > v_noun_)
      throw ConfigError("noun id " + std::to_string(id) +
                        " outside [0, " + std::to_string(v_noun_) + "]");
    out.row(i) = table.value.row(id);
  }
  return out;
}

void CategoryEmbedding::backward(const IntVec& noun_ids, const Mat& d_out) {
  for (Eigen::Index i = 0; i < noun_ids.size(); ++i) {
    table.grad.row(noun_ids(i)) += d_out.row(i);
  }
}

QueryMatrix build_query(const Mat& box_embed, const Mat& category_embed,
                        const BoolVec& padding) {
  if (box_embed.rows() != category_embed.rows() ||
      box_embed.cols() != category_embed.cols())
    throw ShapeError("build_query: B is " + std::to_string(box_embed.rows()) +
                     "x" + std::to_string(box_embed.cols()) + " but C is " +
                     std::to_string(category_embed.rows()) + "x" +
                     std::to_string(category_embed.cols()));
  if (padding.size() != box_embed.rows())
    throw ShapeError("build_query: padding mask length does not match rows");
  return QueryMatrix{box_embed + category_embed, padding};
}

ToyPatchifyBackbone::ToyPatchifyBackbone(int input_size, int grid)
    : input_size_(input_size), grid_(grid), patch_(input_size / grid) {
  if (grid < 1 || input_size < 1 || input_size % grid != 0)
    throw ConfigError("ToyPatchifyBackbone: input_size must be a positive "
                      "multiple of grid");
}

Mat ToyPatchifyBackbone::grid_features(const ImageBuffer& frame) const {
  if (frame.width != input_size_ || frame.height != input_size_)
    throw DataError("backbone expects " + std::to_string(input_size_) + "x" +
                    std::to_string(input_size_) + " frames, got " +
                    std::to_string(frame.width) + "x" +
                    std::to_string(frame.height));
  Mat features(tokens(), feature_dim());
  for (int gy = 0; gy < grid_; ++gy) {
    for (int gx = 0; gx < grid_; ++gx) {
      const int row = gy * grid_ + gx;
      int col = 0;
      for (int py = 0; py < patch_; ++py) {
        for (int px = 0; px < patch_; ++px) {
          for (int c = 0; c < 3; ++c) {
            features(row, col++) =
                frame.at(gy * patch_ + py, gx * patch_ + px, c);
          }
        }
      }
    }
  }
  return features;
}

VisualTokens extract_visual_tokens(const VisualBackbone& backbone,
                                   const Linear& projection,
                                   const ImageBuffer& frame) {
  return VisualTokens{projection.forward(backbone.grid_features(frame))};
}

}  // namespace sta
