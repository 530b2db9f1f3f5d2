#pragma once

// Learned parameter storage. Every trainable array is a named Tensor; the
// model exposes a flat registry of them in a fixed canonical order, which
// drives initialization, the optimizer, checkpointing and gradient checks.

#include "sta/common.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sta {

struct Tensor {
  std::string name;
  Mat value;
  Mat grad;
  bool backbone_group = false;  // true -> trained at the backbone learning rate

  Tensor() = default;
  Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParamRefs = std::vector<Tensor*>;

inline void zero_grads(const ParamRefs& params) {
  for (Tensor* t : params) t->zero_grad();
}

/// Fills a tensor with N(0, std) draws in a fixed element order.
inline void init_normal(Tensor& t, std::mt19937_64& rng, Real std_dev) {
  std::normal_distribution<Real> dist(0.0, std_dev);
  for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      t.value(r, c) = dist(rng);
    }
  }
}

}  // namespace sta
