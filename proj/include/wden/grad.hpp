#pragma once

#include <cmath>
#include <vector>

#include "wden/model.hpp"
#include "wden/objective.hpp"
#include "wden/ops.hpp"
#include "wden/resample.hpp"
#include "wden/tensor.hpp"

namespace wden {

namespace detail {

// Accumulates conv1d weight and bias gradients from the op's input and its
// output gradient; patch layout mirrors the forward GEMM.
template <std::floating_point S>
void conv1d_grads(const Tensor<S>& x, const Tensor<S>& g, const ConvSpec& spec, Tensor<S>& gw,
                  VectorX<S>& gb) {
  const Index k = spec.kernel, s = spec.stride, t_out = g.time();
  Eigen::Map<RowMajorX<S>> w(gw.data(), spec.out_channels, spec.in_channels * k);
  MatrixX<S> patches(spec.in_channels * k, t_out);
  for (Index b = 0; b < x.batch(); ++b) {
    auto xi = x.item(b);
    for (Index t = 0; t < t_out; ++t)
      for (Index c = 0; c < spec.in_channels; ++c)
        patches.col(t).segment(c * k, k) = xi.row(c).segment(t * s, k).transpose();
    w.noalias() += g.item(b) * patches.transpose();
    gb += g.item(b).rowwise().sum();
  }
}

// Same for conv_transpose1d: dL/dw[ci,co,kk] = sum_t x[ci,t] * g[co, t*s+kk].
template <std::floating_point S>
void conv_transpose1d_grads(const Tensor<S>& x, const Tensor<S>& g, const ConvSpec& spec,
                            Tensor<S>& gw, VectorX<S>& gb) {
  const Index k = spec.kernel, s = spec.stride, t_in = x.time();
  Eigen::Map<RowMajorX<S>> w(gw.data(), spec.in_channels, spec.out_channels * k);
  MatrixX<S> cols(spec.out_channels * k, t_in);
  for (Index b = 0; b < x.batch(); ++b) {
    auto gi = g.item(b);
    for (Index t = 0; t < t_in; ++t)
      for (Index c = 0; c < spec.out_channels; ++c)
        cols.col(t).segment(c * k, k) = gi.row(c).segment(t * s, k).transpose();
    w.noalias() += x.item(b) * cols.transpose();
    gb += gi.rowwise().sum();
  }
}

// Backward of glu given the pre-gate tensor and the gradient at its output.
template <std::floating_point S>
Tensor<S> glu_backward(const Tensor<S>& gate, const Tensor<S>& g) {
  const Index c = gate.channels() / 2;
  Tensor<S> out(gate.batch(), gate.channels(), gate.time());
  for (Index b = 0; b < gate.batch(); ++b) {
    auto gi = gate.item(b);
    auto sig = (S(1) / (S(1) + (-gi.bottomRows(c).array()).exp())).eval();
    auto gv = g.item(b).array();
    out.item(b).topRows(c) = (gv * sig).matrix();
    out.item(b).bottomRows(c) = (gv * gi.topRows(c).array() * sig * (S(1) - sig)).matrix();
  }
  return out;
}

// BPTT over one stacked unidirectional run from the recorded gate activations.
// `in` holds each layer's input sequence; `top` is the last layer's output.
// Parameter gradients accumulate into `gl`; returns the stack input gradient.
template <std::floating_point S>
Tensor<S> lstm_backward(const std::vector<LstmLayer<S>>& layers, const std::vector<Tensor<S>>& in,
                        const std::vector<Tensor<S>>& gi, const std::vector<Tensor<S>>& gf,
                        const std::vector<Tensor<S>>& gg, const std::vector<Tensor<S>>& go,
                        const std::vector<Tensor<S>>& gc, const Tensor<S>& top, Tensor<S> g,
                        std::vector<LstmLayer<S>>& gl) {
  for (Index l = Index(layers.size()) - 1; l >= 0; --l) {
    const auto& lay = layers[size_t(l)];
    const Index h = lay.hidden(), t_n = g.time();
    const Tensor<S>& hseq = size_t(l + 1) < layers.size() ? in[size_t(l + 1)] : top;
    Tensor<S> gx(g.batch(), lay.input(), t_n);
    for (Index b = 0; b < g.batch(); ++b) {
      ArrayX<S> carry_h = ArrayX<S>::Zero(h), carry_c = ArrayX<S>::Zero(h);
      VectorX<S> d_pre(4 * h);
      for (Index t = t_n - 1; t >= 0; --t) {
        const ArrayX<S> i = gi[size_t(l)].item(b).col(t).array();
        const ArrayX<S> f = gf[size_t(l)].item(b).col(t).array();
        const ArrayX<S> cin = gg[size_t(l)].item(b).col(t).array();
        const ArrayX<S> o = go[size_t(l)].item(b).col(t).array();
        const ArrayX<S> tc = gc[size_t(l)].item(b).col(t).array().tanh();
        const ArrayX<S> gh = g.item(b).col(t).array() + carry_h;
        const ArrayX<S> dc = gh * o * (S(1) - tc * tc) + carry_c;
        const ArrayX<S> c_prev =
            t > 0 ? ArrayX<S>(gc[size_t(l)].item(b).col(t - 1).array()) : ArrayX<S>::Zero(h);
        d_pre.segment(0, h) = (dc * cin * i * (S(1) - i)).matrix();
        d_pre.segment(h, h) = (dc * c_prev * f * (S(1) - f)).matrix();
        d_pre.segment(2 * h, h) = (dc * i * (S(1) - cin * cin)).matrix();
        d_pre.segment(3 * h, h) = (gh * tc * o * (S(1) - o)).matrix();
        const VectorX<S> x_t = in[size_t(l)].item(b).col(t);
        const VectorX<S> h_prev =
            t > 0 ? VectorX<S>(hseq.item(b).col(t - 1)) : VectorX<S>(VectorX<S>::Zero(h));
        gl[size_t(l)].w_ih.noalias() += d_pre * x_t.transpose();
        gl[size_t(l)].w_hh.noalias() += d_pre * h_prev.transpose();
        gl[size_t(l)].b_ih += d_pre;
        gl[size_t(l)].b_hh += d_pre;
        gx.item(b).col(t).noalias() = lay.w_ih.transpose() * d_pre;
        carry_h = (lay.w_hh.transpose() * d_pre).array();
        carry_c = dc * f;
      }
    }
    g = std::move(gx);
  }
  return g;
}

}  // namespace detail

// Reverse-mode gradients of every parameter given the trace of one forward run
// and the gradient at the model output. The input normalization factor is a
// function of data, not parameters, so it enters only as the fixed scales the
// trace recorded. The gradient with respect to the input itself is not formed.
template <std::floating_point S>
ModelParams<S> model_backward(const ModelParams<S>& params, const ModelConfig& cfg,
                              const Trace<S>& trace, const Tensor<S>& g_out) {
  cfg.validate();
  require(g_out.channels() == 1 && g_out.time() == trace.time_in, "backward: gradient shape mismatch");
  const Index b_n = g_out.batch(), k = cfg.kernel, s = cfg.stride;
  ModelParams<S> gr = zero_params<S>(cfg);

  // output unscale + trim, then the downsample adjoint
  Tensor<S> g_bottom(b_n, 1, trace.time_padded * cfg.resample);
  for (Index b = 0; b < b_n; ++b) {
    VectorX<S> gd = VectorX<S>::Zero(trace.time_padded);
    gd.head(trace.time_in) = g_out.row(b, 0).transpose() / S(trace.factor[size_t(b)]);
    g_bottom.row(b, 0) = downsample_factor_adjoint(gd, cfg.resample).transpose();
  }

  // decoder, deepest stage last in forward order so reversed here
  std::vector<Tensor<S>> g_skip(size_t(cfg.depth));
  Tensor<S> g = std::move(g_bottom);
  for (Index d = cfg.depth - 1; d >= 0; --d) {
    const Index i = cfg.depth - 1 - d;
    const auto& lay = params.dec[size_t(d)];
    const Index cin = cfg.enc_out(i), cout = cfg.enc_in(i);
    if (i > 0)
      g.raw() = ((trace.dec_pre[size_t(d)].raw().array() > S(0)).template cast<S>() *
                 g.raw().array())
                    .matrix();

    const ConvSpec tconv{cin, cout, k, s};
    detail::conv_transpose1d_grads(trace.dec_act[size_t(d)], g, tconv, gr.dec[size_t(d)].tconv_w,
                                   gr.dec[size_t(d)].tconv_b);
    Tensor<S> g_act = conv1d(g, lay.tconv_w, VectorX<S>(VectorX<S>::Zero(cin)),
                             ConvSpec{cout, cin, k, s});

    Tensor<S> g_gate = detail::glu_backward(trace.dec_gate[size_t(d)], g_act);
    const ConvSpec mix{cin, 2 * cin, 1, 1};
    detail::conv1d_grads(trace.dec_sum[size_t(d)], g_gate, mix, gr.dec[size_t(d)].mix_w,
                         gr.dec[size_t(d)].mix_b);
    Tensor<S> g_sum = conv_transpose1d(g_gate, lay.mix_w, VectorX<S>(VectorX<S>::Zero(cin)),
                                       ConvSpec{2 * cin, cin, 1, 1});

    // the skip add fans the same gradient to the encoder side
    Tensor<S>& acc = g_skip[size_t(i)];
    acc = Tensor<S>(b_n, cin, trace.enc_out[size_t(i)].time());
    for (Index b = 0; b < b_n; ++b) acc.item(b).leftCols(g_sum.time()) = g_sum.item(b);
    g = std::move(g_sum);
  }

  // sequence model
  if (cfg.causal) {
    g = detail::lstm_backward(params.lstm, trace.lstm_in[0], trace.lstm_i[0], trace.lstm_f[0],
                              trace.lstm_g[0], trace.lstm_o[0], trace.lstm_c[0], trace.lstm_out, g,
                              gr.lstm);
  } else {
    const Index hb = cfg.bottleneck();
    for (Index b = 0; b < b_n; ++b) {
      gr.merge_w.noalias() += g.item(b) * trace.lstm_cat.item(b).transpose();
      gr.merge_b += g.item(b).rowwise().sum();
    }
    Tensor<S> g_cat(b_n, 2 * hb, g.time());
    for (Index b = 0; b < b_n; ++b) g_cat.item(b).noalias() = params.merge_w.transpose() * g.item(b);
    Tensor<S> g_fwd(b_n, hb, g.time()), g_rev(b_n, hb, g.time());
    for (Index b = 0; b < b_n; ++b) {
      g_fwd.item(b) = g_cat.item(b).topRows(hb);
      g_rev.item(b) = g_cat.item(b).bottomRows(hb);
    }
    Tensor<S> fwd_top(b_n, hb, g.time()), rev_top(b_n, hb, g.time());
    for (Index b = 0; b < b_n; ++b) {
      fwd_top.item(b) = trace.lstm_cat.item(b).topRows(hb);
      rev_top.item(b) = trace.lstm_cat.item(b).bottomRows(hb);
    }
    Tensor<S> ga = detail::lstm_backward(params.lstm, trace.lstm_in[0], trace.lstm_i[0],
                                         trace.lstm_f[0], trace.lstm_g[0], trace.lstm_o[0],
                                         trace.lstm_c[0], fwd_top, std::move(g_fwd), gr.lstm);
    Tensor<S> gb = detail::lstm_backward(params.lstm_rev, trace.lstm_in[1], trace.lstm_i[1],
                                         trace.lstm_f[1], trace.lstm_g[1], trace.lstm_o[1],
                                         trace.lstm_c[1], time_reverse(rev_top),
                                         time_reverse(g_rev), gr.lstm_rev);
    g = std::move(ga);
    g.raw() += time_reverse(gb).raw();
  }
  g.raw() += g_skip[size_t(cfg.depth - 1)].raw();

  // encoder reversed; layer 0's input gradient is never needed
  for (Index i = cfg.depth - 1; i >= 0; --i) {
    const auto& lay = params.enc[size_t(i)];
    const Index cin = cfg.enc_in(i), cout = cfg.enc_out(i);
    Tensor<S> g_gate = detail::glu_backward(trace.enc_gate[size_t(i)], g);
    const ConvSpec mix{cout, 2 * cout, 1, 1};
    detail::conv1d_grads(trace.enc_act[size_t(i)], g_gate, mix, gr.enc[size_t(i)].mix_w,
                         gr.enc[size_t(i)].mix_b);
    Tensor<S> g_act = conv_transpose1d(g_gate, lay.mix_w, VectorX<S>(VectorX<S>::Zero(cout)),
                                       ConvSpec{2 * cout, cout, 1, 1});
    g_act.raw() = ((trace.enc_pre[size_t(i)].raw().array() > S(0)).template cast<S>() *
                   g_act.raw().array())
                      .matrix();

    const Tensor<S>& input = i == 0 ? trace.up : trace.enc_out[size_t(i - 1)];
    const ConvSpec conv{cin, cout, k, s};
    detail::conv1d_grads(input, g_act, conv, gr.enc[size_t(i)].conv_w, gr.enc[size_t(i)].conv_b);
    if (i == 0) break;
    g = conv_transpose1d(g_act, lay.conv_w, VectorX<S>(VectorX<S>::Zero(cin)),
                         ConvSpec{cout, cin, k, s});
    g.raw() += g_skip[size_t(i - 1)].raw();
  }
  return gr;
}

template <std::floating_point S>
struct BackwardResult {
  ModelParams<S> grads;
  LossReport loss;  // batch means
};

// Loss gradient of the denoising objective for one (noisy, clean) batch:
// forward with trace, per-item loss backward, model backward. Loss terms are
// averaged over the batch.
template <std::floating_point S>
BackwardResult<S> backward(const ModelParams<S>& params, const ModelConfig& cfg,
                           const Tensor<S>& noisy, const Tensor<S>& clean, double beta = 0.5,
                           const std::vector<StftConfig>& resolutions = default_resolutions()) {
  require(noisy.same_shape(clean), "backward: noisy/clean shape mismatch");
  Trace<S> trace;
  Tensor<S> y_hat = forward(params, cfg, noisy, &trace);

  const Index b_n = noisy.batch();
  LossReport mean;
  mean.beta = beta;
  mean.sc.assign(resolutions.size(), 0.0);
  mean.mag.assign(resolutions.size(), 0.0);
  Tensor<S> g_out(b_n, 1, noisy.time());
  for (Index b = 0; b < b_n; ++b) {
    const VectorX<S> y = clean.row(b, 0).transpose();
    const VectorX<S> yh = y_hat.row(b, 0).transpose();
    const LossReport r = total_loss(y, yh, beta, resolutions);
    require(std::isfinite(r.total), "backward: loss is not finite");
    mean.l1 += r.l1 / double(b_n);
    for (size_t j = 0; j < resolutions.size(); ++j) {
      mean.sc[j] += r.sc[j] / double(b_n);
      mean.mag[j] += r.mag[j] / double(b_n);
    }
    mean.total += r.total / double(b_n);
    g_out.row(b, 0) = (total_loss_backward(y, yh, beta, resolutions) / S(b_n)).transpose();
  }
  return {model_backward(params, cfg, trace, g_out), mean};
}

}  // namespace wden
