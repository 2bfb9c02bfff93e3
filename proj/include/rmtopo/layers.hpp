#pragma once

// Forward/backward kernels for the layer zoo. Weight tensors use the
// [out, in, ...] convention here; conversion to crossbar orientation happens
// in the hardware network.

#include <vector>

#include "rmtopo/tensor.hpp"

namespace rmtopo {

struct ConvGrads {
  Tensor dx;
  Tensor dk;
};

/// Valid cross-correlation, stride 1, no padding, no bias.
/// x: [N,C,H,W], k: [O,C,kh,kw] -> [N,O,H-kh+1,W-kw+1].
Tensor conv2d_forward(const Tensor& x, const Tensor& k);
ConvGrads conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dy);

struct PoolResult {
  Tensor y;
  /// Flat index into x of the element selected for each output.
  std::vector<std::size_t> argmax;
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major
/// scan order. With floor_mode a trailing odd row/column is dropped;
/// otherwise odd spatial dims are a dimension error.
PoolResult maxpool2x2_forward(const Tensor& x, bool floor_mode = false);
Tensor maxpool2x2_backward(const std::vector<int>& x_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);
Tensor tanh_forward(const Tensor& x);
/// Uses the forward output y = tanh(x).
Tensor tanh_backward(const Tensor& y, const Tensor& dy);

struct FcGrads {
  Tensor dx;
  Tensor dw;
};

/// x: [N,in], w: [out,in] -> [N,out]; no bias.
Tensor fc_forward(const Tensor& x, const Tensor& w);
FcGrads fc_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

/// h_t = tanh(W_ih x_t + W_hh h_prev). x_t: [N,in], h_prev: [N,hidden],
/// w_ih: [hidden,in], w_hh: [hidden,hidden].
Tensor rnn_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& w_ih, const Tensor& w_hh);

struct RnnSequenceGrads {
  std::vector<Tensor> dx;
  Tensor dw_ih;
  Tensor dw_hh;
};

/// Unrolled recurrence from h(0) = 0; returns h(1..T).
std::vector<Tensor> rnn_forward(const std::vector<Tensor>& xs, const Tensor& w_ih,
                                const Tensor& w_hh);
/// Backpropagation through time given dL/dh(t) for every step.
RnnSequenceGrads rnn_backward(const std::vector<Tensor>& xs, const std::vector<Tensor>& hs,
                              const Tensor& w_ih, const Tensor& w_hh,
                              const std::vector<Tensor>& dhs);

/// Arithmetic mean of the hidden states.
Tensor rnn_average(const std::vector<Tensor>& hs);

struct XentResult {
  double loss = 0.0;  // summed over the batch
  Tensor dlogits;     // softmax - onehot, per sample
};

/// logits: [N,C]; labels.size() == N.
XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels);

}  // namespace rmtopo
