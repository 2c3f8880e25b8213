#pragma once

#include <optional>
#include <vector>

#include "wden/tensor.hpp"

namespace wden {

struct ConvSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 1;
  Index stride = 1;

  void validate() const {
    require(in_channels >= 1 && out_channels >= 1, "conv: channel counts must be >= 1");
    require(kernel >= 1 && stride >= 1, "conv: kernel and stride must be >= 1");
  }
};

inline Index conv_out_len(Index t, Index kernel, Index stride) {
  return t < kernel ? -1 : (t - kernel) / stride + 1;
}

inline Index convt_out_len(Index t, Index kernel, Index stride) {
  return t == 0 ? 0 : (t - 1) * stride + kernel;
}

// Valid (no padding) strided cross-correlation. weights is [out, in, kernel],
// so row co of its raw matrix is the contiguous (in*kernel) filter for output
// channel co; the whole op is one GEMM against an unrolled patch matrix.
template <std::floating_point S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& weights, const VectorX<S>& bias, const ConvSpec& spec) {
  spec.validate();
  require(x.channels() == spec.in_channels, "conv1d: input channel mismatch");
  require(weights.batch() == spec.out_channels && weights.channels() == spec.in_channels &&
              weights.time() == spec.kernel,
          "conv1d: weight shape mismatch");
  require(bias.size() == spec.out_channels, "conv1d: bias size mismatch");
  require(x.time() >= spec.kernel, "conv1d: input shorter than kernel");

  const Index k = spec.kernel, s = spec.stride;
  const Index t_out = conv_out_len(x.time(), k, s);
  Eigen::Map<const RowMajorX<S>> w(weights.data(), spec.out_channels, spec.in_channels * k);

  Tensor<S> out(x.batch(), spec.out_channels, t_out);
  MatrixX<S> patches(spec.in_channels * k, t_out);
  for (Index b = 0; b < x.batch(); ++b) {
    auto xi = x.item(b);
    for (Index t = 0; t < t_out; ++t)
      for (Index c = 0; c < spec.in_channels; ++c)
        patches.col(t).segment(c * k, k) = xi.row(c).segment(t * s, k).transpose();
    out.item(b).noalias() = w * patches;
    out.item(b).colwise() += bias;
  }
  return out;
}

// Transposed (fractionally strided) convolution, the adjoint of conv1d under
// the shared-weight convention: weights is [in, out, kernel], i.e. the same
// 3-d array a conv1d mapping out->in channels would use.
template <std::floating_point S>
Tensor<S> conv_transpose1d(const Tensor<S>& x, const Tensor<S>& weights, const VectorX<S>& bias,
                           const ConvSpec& spec) {
  spec.validate();
  require(x.channels() == spec.in_channels, "conv_transpose1d: input channel mismatch");
  require(weights.batch() == spec.in_channels && weights.channels() == spec.out_channels &&
              weights.time() == spec.kernel,
          "conv_transpose1d: weight shape mismatch");
  require(bias.size() == spec.out_channels, "conv_transpose1d: bias size mismatch");

  const Index k = spec.kernel, s = spec.stride;
  const Index t_out = convt_out_len(x.time(), k, s);
  Eigen::Map<const RowMajorX<S>> w(weights.data(), spec.in_channels, spec.out_channels * k);

  Tensor<S> out(x.batch(), spec.out_channels, t_out);
  MatrixX<S> cols(spec.out_channels * k, x.time());
  for (Index b = 0; b < x.batch(); ++b) {
    cols.noalias() = w.transpose() * x.item(b);
    auto oi = out.item(b);
    for (Index t = 0; t < x.time(); ++t)
      for (Index c = 0; c < spec.out_channels; ++c)
        oi.row(c).segment(t * s, k) += cols.col(t).segment(c * k, k).transpose();
    oi.colwise() += bias;
  }
  return out;
}

template <std::floating_point S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = x;
  out.raw() = out.raw().cwiseMax(S(0));
  return out;
}

// Gated linear unit over the channel axis: first half of the channels is the
// value path, second half the gate. Halves the channel count.
template <std::floating_point S>
Tensor<S> glu(const Tensor<S>& x) {
  require(x.channels() % 2 == 0, "glu: channel count must be even");
  const Index c = x.channels() / 2;
  Tensor<S> out(x.batch(), c, x.time());
  for (Index b = 0; b < x.batch(); ++b) {
    auto xi = x.item(b);
    out.item(b) = xi.topRows(c).array() * (S(1) / (S(1) + (-xi.bottomRows(c).array()).exp()));
  }
  return out;
}

// One LSTM stack layer; gate rows of w_ih/w_hh are packed [i; f; g; o].
template <std::floating_point S>
struct LstmLayer {
  MatrixX<S> w_ih;  // 4H x in
  MatrixX<S> w_hh;  // 4H x H
  VectorX<S> b_ih;  // 4H
  VectorX<S> b_hh;  // 4H

  Index hidden() const { return w_hh.cols(); }
  Index input() const { return w_ih.cols(); }
};

// Carried (h, c) per layer, columns indexed by batch item.
template <std::floating_point S>
struct LstmState {
  std::vector<MatrixX<S>> h, c;  // each H x B

  static LstmState zero(const std::vector<LstmLayer<S>>& layers, Index batch) {
    LstmState st;
    for (const auto& l : layers) {
      st.h.push_back(MatrixX<S>::Zero(l.hidden(), batch));
      st.c.push_back(MatrixX<S>::Zero(l.hidden(), batch));
    }
    return st;
  }
};

template <std::floating_point S>
ArrayX<S> sigmoid(const ArrayX<S>& a) {
  return S(1) / (S(1) + (-a).exp());
}

// Unidirectional stacked LSTM over [B, C, T]. Continuation contract: running
// the sequence in two pieces with the state threaded through equals one run.
// Returns [B, H, T]; `state` is advanced in place.
template <std::floating_point S>
Tensor<S> lstm_forward(const Tensor<S>& x, const std::vector<LstmLayer<S>>& layers, LstmState<S>& state) {
  require(!layers.empty(), "lstm: no layers");
  require(x.channels() == layers.front().input(), "lstm: input size mismatch");
  require(state.h.size() == layers.size() && state.c.size() == layers.size(), "lstm: state layer mismatch");
  for (size_t l = 0; l < layers.size(); ++l)
    require(state.h[l].rows() == layers[l].hidden() && state.h[l].cols() == x.batch(),
            "lstm: state shape mismatch");

  const Index b_n = x.batch(), t_n = x.time();
  Tensor<S> cur = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& lay = layers[l];
    const Index hid = lay.hidden();
    Tensor<S> next(b_n, hid, t_n);
    MatrixX<S> xt(lay.input(), b_n), gates(4 * hid, b_n);
    for (Index t = 0; t < t_n; ++t) {
      for (Index b = 0; b < b_n; ++b) xt.col(b) = cur.item(b).col(t);
      gates.noalias() = lay.w_ih * xt;
      gates.noalias() += lay.w_hh * state.h[l];
      gates.colwise() += lay.b_ih + lay.b_hh;
      for (Index b = 0; b < b_n; ++b) {
        ArrayX<S> gi = sigmoid<S>(gates.col(b).segment(0, hid).array());
        ArrayX<S> gf = sigmoid<S>(gates.col(b).segment(hid, hid).array());
        ArrayX<S> gg = gates.col(b).segment(2 * hid, hid).array().tanh();
        ArrayX<S> go = sigmoid<S>(gates.col(b).segment(3 * hid, hid).array());
        state.c[l].col(b).array() = gf * state.c[l].col(b).array() + gi * gg;
        state.h[l].col(b).array() = go * state.c[l].col(b).array().tanh();
        next.item(b).col(t) = state.h[l].col(b);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

// Per-timestep affine map, used to merge bidirectional LSTM halves.
template <std::floating_point S>
Tensor<S> linear(const Tensor<S>& x, const MatrixX<S>& w, const VectorX<S>& bias) {
  require(x.channels() == w.cols(), "linear: input size mismatch");
  require(bias.size() == w.rows(), "linear: bias size mismatch");
  Tensor<S> out(x.batch(), w.rows(), x.time());
  for (Index b = 0; b < x.batch(); ++b) {
    out.item(b).noalias() = w * x.item(b);
    out.item(b).colwise() += bias;
  }
  return out;
}

// Reverses the time axis; helper for the bidirectional variant.
template <std::floating_point S>
Tensor<S> time_reverse(const Tensor<S>& x) {
  Tensor<S> out(x.batch(), x.channels(), x.time());
  out.raw() = x.raw().rowwise().reverse();
  return out;
}

}  // namespace wden
