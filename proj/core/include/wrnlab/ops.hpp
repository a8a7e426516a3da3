#pragma once

#include <span>
#include <vector>

#include "wrnlab/tape.hpp"
#include "wrnlab/tensor.hpp"

// Differentiable primitives for the wide-residual-network layer set. Every
// op validates shapes, computes its output eagerly and records a backward
// closure on the tape.
namespace wrnlab::ops {

// Raw kernels, shared with the spectral-norm power iteration.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad);
template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& dy, const BasicTensor<T>& w, const Shape& x_shape,
                                     int stride, int pad);
template <typename T>
BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>& dy, const BasicTensor<T>& x, const Shape& w_shape,
                                      int stride, int pad);

inline std::size_t conv_out_size(std::size_t in, int k, int stride, int pad) {
  return (in + 2 * static_cast<std::size_t>(pad) - static_cast<std::size_t>(k)) / static_cast<std::size_t>(stride) + 1;
}

// x [N,C,H,W], w [O,C,k,k], no bias.
template <typename T>
NodeId conv2d(Tape<T>& tape, NodeId x, NodeId w, int stride, int pad);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;  // unbiased, for the running average
};

// Training-mode batch normalization over every axis except 1. Returns the
// batch statistics through `stats` so the caller can update running averages.
template <typename T>
NodeId batch_norm_train(Tape<T>& tape, NodeId x, NodeId gamma, NodeId beta, double eps, BatchNormStats* stats);

template <typename T>
NodeId batch_norm_eval(Tape<T>& tape, NodeId x, NodeId gamma, NodeId beta, const BasicTensor<T>& running_mean,
                       const BasicTensor<T>& running_var, double eps);

template <typename T>
NodeId relu(Tape<T>& tape, NodeId x);

template <typename T>
NodeId add(Tape<T>& tape, NodeId a, NodeId b);

// [N,C,H,W] -> [N,C], mean over the whole spatial extent.
template <typename T>
NodeId global_avg_pool(Tape<T>& tape, NodeId x);

// [N,...] -> [N, prod(...)]
template <typename T>
NodeId flatten(Tape<T>& tape, NodeId x);

// x [N,in], w [out,in], optional bias [out] (pass bias == x to omit is not
// allowed; use the overload without bias).
template <typename T>
NodeId linear(Tape<T>& tape, NodeId x, NodeId w, NodeId bias);
template <typename T>
NodeId linear(Tape<T>& tape, NodeId x, NodeId w);

// Mean softmax cross-entropy over the batch.
template <typename T>
NodeId softmax_cross_entropy(Tape<T>& tape, NodeId logits, std::span<const int> labels);

// Mean over the batch of max_{j != y} z_j - z_y. Ties pick the lowest index.
template <typename T>
NodeId cw_margin(Tape<T>& tape, NodeId logits, std::span<const int> labels);

template <typename T>
NodeId sum(Tape<T>& tape, NodeId x);

template <typename T>
NodeId sum_squares(Tape<T>& tape, NodeId x);

// sum |x - reference| with reference held constant.
template <typename T>
NodeId l1_distance(Tape<T>& tape, NodeId x, const BasicTensor<T>& reference);

template <typename T>
NodeId scale(Tape<T>& tape, NodeId x, T factor);

}  // namespace wrnlab::ops
