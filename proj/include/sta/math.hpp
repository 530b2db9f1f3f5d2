#pragma once

// Scalar activations and row-wise matrix primitives used across the model.
// Everything here is a pure function.

#include "sta/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sta {

template <class S>
S sigmoid(S x) {
  if (x >= S(0)) {
    const S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

// Numerically stable softplus. Inputs are floored at -700 so the result is
// always a positive normal double; the true value there is ~1e-304 anyway.
template <class S>
S softplus(S x) {
  if (x < S(-700)) x = S(-700);
  if (x > S(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <class S>
S softplus_grad(S x) {
  if (x < S(-700)) x = S(-700);
  return sigmoid(x);
}

// Smooth L1 (Huber-style): quadratic below beta, linear above.
template <class S>
S smooth_l1(S err, S beta) {
  const S a = std::abs(err);
  if (a < beta) return S(0.5) * err * err / beta;
  return a - S(0.5) * beta;
}

template <class S>
S smooth_l1_grad(S err, S beta) {
  if (std::abs(err) < beta) return err / beta;
  return err > S(0) ? S(1) : (err < S(0) ? S(-1) : S(0));
}

// Row-wise softmax with masked columns forced to exactly zero probability.
// At least one column per row must be unmasked.
inline Mat masked_softmax_rows(const Mat& logits, const BoolVec& col_masked) {
  Mat p = Mat::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Real max_l = -std::numeric_limits<Real>::infinity();
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (!col_masked(c)) max_l = std::max(max_l, logits(r, c));
    }
    Real sum = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (!col_masked(c)) {
        const Real e = std::exp(logits(r, c) - max_l);
        p(r, c) = e;
        sum += e;
      }
    }
    p.row(r) /= sum;
  }
  return p;
}

inline Mat softmax_rows(const Mat& logits) {
  return masked_softmax_rows(logits, BoolVec::Constant(logits.cols(), false));
}

// Backward of a row-wise softmax: given probabilities p and upstream d_p,
// returns the gradient w.r.t. the logits. Masked columns (p == 0) come out 0.
inline Mat softmax_rows_backward(const Mat& p, const Mat& d_p) {
  Mat d_logits = p.cwiseProduct(d_p);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    d_logits.row(r) -= p.row(r) * p.row(r).dot(d_p.row(r));
  }
  return d_logits;
}

}  // namespace sta
