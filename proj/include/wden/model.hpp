#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wden/ops.hpp"
#include "wden/resample.hpp"
#include "wden/tensor.hpp"

namespace wden {

struct ModelConfig {
  Index depth = 5;          // encoder/decoder layer count
  Index hidden = 48;        // channels after the first encoder layer
  Index kernel = 8;
  Index stride = 4;
  Index resample = 4;       // internal resampling factor
  bool causal = true;
  bool normalize = true;
  double floor_std = 1e-3;  // added to the input std before scaling
  Index sample_rate = 16000;

  void validate() const {
    require(depth >= 1, "config: depth must be >= 1");
    require(hidden >= 1, "config: hidden must be >= 1");
    require(kernel >= 1 && stride >= 1, "config: kernel and stride must be >= 1");
    require(kernel >= stride, "config: kernel must be >= stride");
    require(resample == 1 || resample == 2 || resample == 4, "config: resample must be 1, 2, or 4");
    Index total_stride = 1;
    for (Index i = 0; i < depth; ++i) total_stride *= stride;
    require(total_stride % resample == 0, "config: resample must divide stride^depth");
    require(sample_rate > 0, "config: sample_rate must be > 0");
    require(floor_std >= 0, "config: floor_std must be >= 0");
  }

  Index enc_in(Index layer) const { return layer == 0 ? 1 : hidden << (layer - 1); }
  Index enc_out(Index layer) const { return hidden << layer; }
  Index bottleneck() const { return enc_out(depth - 1); }
};

template <std::floating_point S>
struct EncLayer {
  Tensor<S> conv_w;   // [out, in, kernel]
  VectorX<S> conv_b;
  Tensor<S> mix_w;    // [2*out, out, 1]
  VectorX<S> mix_b;
};

template <std::floating_point S>
struct DecLayer {
  Tensor<S> mix_w;    // [2*in, in, 1]
  VectorX<S> mix_b;
  Tensor<S> tconv_w;  // [in, out, kernel]
  VectorX<S> tconv_b;
};

template <std::floating_point S>
struct ModelParams {
  std::vector<EncLayer<S>> enc;
  std::vector<LstmLayer<S>> lstm;      // forward direction
  std::vector<LstmLayer<S>> lstm_rev;  // reverse direction, bidirectional only
  MatrixX<S> merge_w;                  // [bottleneck, 2*bottleneck], bidirectional only
  VectorX<S> merge_b;

  template <std::floating_point S2>
  ModelParams<S2> cast() const {
    ModelParams<S2> out;
    for (const auto& e : enc)
      out.enc.push_back({e.conv_w.template cast<S2>(), e.conv_b.template cast<S2>(),
                         e.mix_w.template cast<S2>(), e.mix_b.template cast<S2>()});
    auto cast_lstm = [](const LstmLayer<S>& l) {
      return LstmLayer<S2>{l.w_ih.template cast<S2>(), l.w_hh.template cast<S2>(),
                           l.b_ih.template cast<S2>(), l.b_hh.template cast<S2>()};
    };
    for (const auto& l : lstm) out.lstm.push_back(cast_lstm(l));
    for (const auto& l : lstm_rev) out.lstm_rev.push_back(cast_lstm(l));
    out.merge_w = merge_w.template cast<S2>();
    out.merge_b = merge_b.template cast<S2>();
    out.dec.reserve(dec.size());
    for (const auto& d : dec)
      out.dec.push_back({d.mix_w.template cast<S2>(), d.mix_b.template cast<S2>(),
                         d.tconv_w.template cast<S2>(), d.tconv_b.template cast<S2>()});
    return out;
  }

  std::vector<DecLayer<S>> dec;
};

// Zero-filled parameter set with the shapes implied by the config.
template <std::floating_point S>
ModelParams<S> zero_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams<S> p;
  for (Index i = 0; i < cfg.depth; ++i) {
    const Index cin = cfg.enc_in(i), cout = cfg.enc_out(i);
    p.enc.push_back({Tensor<S>(cout, cin, cfg.kernel), VectorX<S>::Zero(cout),
                     Tensor<S>(2 * cout, cout, 1), VectorX<S>::Zero(2 * cout)});
  }
  const Index hb = cfg.bottleneck();  // both layers map hb -> hb
  for (Index l = 0; l < 2; ++l) {
    p.lstm.push_back({MatrixX<S>::Zero(4 * hb, hb), MatrixX<S>::Zero(4 * hb, hb),
                      VectorX<S>::Zero(4 * hb), VectorX<S>::Zero(4 * hb)});
    if (!cfg.causal)
      p.lstm_rev.push_back({MatrixX<S>::Zero(4 * hb, hb), MatrixX<S>::Zero(4 * hb, hb),
                            VectorX<S>::Zero(4 * hb), VectorX<S>::Zero(4 * hb)});
  }
  if (!cfg.causal) {
    p.merge_w = MatrixX<S>::Zero(hb, 2 * hb);
    p.merge_b = VectorX<S>::Zero(hb);
  }
  for (Index i = cfg.depth - 1; i >= 0; --i) {
    const Index cin = cfg.enc_out(i), cout = cfg.enc_in(i);
    p.dec.push_back({Tensor<S>(2 * cin, cin, 1), VectorX<S>::Zero(2 * cin),
                     Tensor<S>(cin, cout, cfg.kernel), VectorX<S>::Zero(cout)});
  }
  return p;
}

// Uniform draw in [0, 1) built from the top 53 bits of the generator output,
// so initialization is identical across standard libraries.
inline double uniform_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

template <std::floating_point S>
void fill_kaiming(std::mt19937_64& rng, S* data, Index n, Index fan_in) {
  const double bound = std::sqrt(6.0 / double(fan_in));  // uniform with variance 2/fan_in
  for (Index i = 0; i < n; ++i) data[i] = S((2.0 * uniform_unit(rng) - 1.0) * bound);
}

// Weights drawn layer by layer in a fixed order; biases stay zero so a silent
// input maps to silent output before training.
template <std::floating_point S>
ModelParams<S> init_params(const ModelConfig& cfg, uint64_t seed) {
  ModelParams<S> p = zero_params<S>(cfg);
  std::mt19937_64 rng(seed);
  for (auto& e : p.enc) {
    fill_kaiming(rng, e.conv_w.data(), e.conv_w.size(), e.conv_w.channels() * e.conv_w.time());
    fill_kaiming(rng, e.mix_w.data(), e.mix_w.size(), e.mix_w.channels());
  }
  auto fill_lstm = [&](LstmLayer<S>& l) {
    fill_kaiming(rng, l.w_ih.data(), l.w_ih.size(), l.w_ih.cols());
    fill_kaiming(rng, l.w_hh.data(), l.w_hh.size(), l.w_hh.cols());
  };
  for (auto& l : p.lstm) fill_lstm(l);
  for (auto& l : p.lstm_rev) fill_lstm(l);
  if (p.merge_w.size() > 0) fill_kaiming(rng, p.merge_w.data(), p.merge_w.size(), p.merge_w.cols());
  for (auto& d : p.dec) {
    fill_kaiming(rng, d.mix_w.data(), d.mix_w.size(), d.mix_w.channels());
    fill_kaiming(rng, d.tconv_w.data(), d.tconv_w.size(), d.tconv_w.batch() * d.tconv_w.time());
  }
  return p;
}

// Flat enumeration of every parameter tensor in a fixed canonical order; the
// weight file manifest, optimizer state, and gradient checks all follow it.
template <std::floating_point S>
struct ParamView {
  std::string name;
  S* data;
  Index size;
  std::vector<Index> shape;
};

template <std::floating_point S>
std::vector<ParamView<S>> param_views(ModelParams<S>& p) {
  std::vector<ParamView<S>> v;
  auto tensor = [&](const std::string& name, Tensor<S>& t) {
    v.push_back({name, t.data(), t.size(), {t.batch(), t.channels(), t.time()}});
  };
  auto matrix = [&](const std::string& name, MatrixX<S>& m) {
    v.push_back({name, m.data(), m.size(), {m.rows(), m.cols()}});
  };
  auto vec = [&](const std::string& name, VectorX<S>& b) {
    v.push_back({name, b.data(), b.size(), {b.size()}});
  };
  for (size_t i = 0; i < p.enc.size(); ++i) {
    const std::string base = "enc" + std::to_string(i);
    tensor(base + ".conv.w", p.enc[i].conv_w);
    vec(base + ".conv.b", p.enc[i].conv_b);
    tensor(base + ".mix.w", p.enc[i].mix_w);
    vec(base + ".mix.b", p.enc[i].mix_b);
  }
  auto lstm = [&](const std::string& base, LstmLayer<S>& l) {
    matrix(base + ".w_ih", l.w_ih);
    matrix(base + ".w_hh", l.w_hh);
    vec(base + ".b_ih", l.b_ih);
    vec(base + ".b_hh", l.b_hh);
  };
  for (size_t l = 0; l < p.lstm.size(); ++l) lstm("lstm" + std::to_string(l), p.lstm[l]);
  for (size_t l = 0; l < p.lstm_rev.size(); ++l) lstm("lstm_rev" + std::to_string(l), p.lstm_rev[l]);
  if (p.merge_w.size() > 0) {
    matrix("merge.w", p.merge_w);
    vec("merge.b", p.merge_b);
  }
  for (size_t d = 0; d < p.dec.size(); ++d) {
    const std::string base = "dec" + std::to_string(d);
    tensor(base + ".mix.w", p.dec[d].mix_w);
    vec(base + ".mix.b", p.dec[d].mix_b);
    tensor(base + ".tconv.w", p.dec[d].tconv_w);
    vec(base + ".tconv.b", p.dec[d].tconv_b);
  }
  return v;
}

template <std::floating_point S>
Index param_count(ModelParams<S>& p) {
  Index n = 0;
  for (const auto& v : param_views(p)) n += v.size;
  return n;
}

// Smallest padded length T* >= t such that resample * T* threads every encoder
// layer with exact stride divisibility; the decoder then restores resample * T*
// exactly.
inline Index valid_length(const ModelConfig& cfg, Index t) {
  cfg.validate();
  require(t >= 1, "valid_length: length must be >= 1");
  for (Index cand = t;; ++cand) {
    Index len = cand * cfg.resample;
    bool ok = true;
    for (Index i = 0; i < cfg.depth; ++i) {
      if (len < cfg.kernel || (len - cfg.kernel) % cfg.stride != 0) {
        ok = false;
        break;
      }
      len = (len - cfg.kernel) / cfg.stride + 1;
    }
    if (ok) return cand;
  }
}

// Everything the backward pass needs from a forward run.
template <std::floating_point S>
struct Trace {
  Index time_in = 0;
  Index time_padded = 0;
  std::vector<double> factor;           // per-item input scale actually applied
  Tensor<S> up;                          // encoder input after padding + upsampling
  std::vector<Tensor<S>> enc_pre;        // conv output before ReLU
  std::vector<Tensor<S>> enc_act;        // after ReLU (mix input)
  std::vector<Tensor<S>> enc_gate;       // mix output before GLU
  std::vector<Tensor<S>> enc_out;        // after GLU (skip source)
  // per direction, per layer: inputs and gate activations for BPTT
  std::vector<std::vector<Tensor<S>>> lstm_in, lstm_i, lstm_f, lstm_g, lstm_o, lstm_c;
  Tensor<S> lstm_cat;                    // bidirectional merge input
  Tensor<S> lstm_out;
  std::vector<Tensor<S>> dec_sum;        // after skip add (mix input)
  std::vector<Tensor<S>> dec_gate;       // mix output before GLU
  std::vector<Tensor<S>> dec_act;        // after GLU (tconv input)
  std::vector<Tensor<S>> dec_pre;        // tconv output before ReLU
  Tensor<S> bottom;                      // decoder output before downsampling
};

namespace detail {

template <std::floating_point S>
Tensor<S> lstm_stack(const Tensor<S>& x, const std::vector<LstmLayer<S>>& layers,
                     std::vector<std::vector<Tensor<S>>>* tr, Index dir) {
  if (tr) {
    for (auto* v : {&tr[0], &tr[1], &tr[2], &tr[3], &tr[4], &tr[5]})
      if (v->size() < size_t(dir + 1)) v->resize(dir + 1);
  }
  Tensor<S> cur = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (tr) tr[0][dir].push_back(cur);
    const Index h = layers[l].hidden();
    Tensor<S> nxt(cur.batch(), h, cur.time());
    Tensor<S> gi, gf, gg, go, gc;
    if (tr) {
      gi = Tensor<S>(cur.batch(), h, cur.time());
      gf = gi;
      gg = gi;
      go = gi;
      gc = gi;
    }
    for (Index b = 0; b < cur.batch(); ++b) {
      VectorX<S> hs = VectorX<S>::Zero(h), cs = VectorX<S>::Zero(h);
      for (Index t = 0; t < cur.time(); ++t) {
        VectorX<S> pre = layers[l].w_ih * cur.item(b).col(t) + layers[l].w_hh * hs +
                         layers[l].b_ih + layers[l].b_hh;
        ArrayX<S> i = sigmoid(ArrayX<S>(pre.segment(0, h)));
        ArrayX<S> f = sigmoid(ArrayX<S>(pre.segment(h, h)));
        ArrayX<S> g = pre.segment(2 * h, h).array().tanh();
        ArrayX<S> o = sigmoid(ArrayX<S>(pre.segment(3 * h, h)));
        cs = (f * cs.array() + i * g).matrix();
        hs = (o * cs.array().tanh()).matrix();
        nxt.item(b).col(t) = hs;
        if (tr) {
          gi.item(b).col(t) = i.matrix();
          gf.item(b).col(t) = f.matrix();
          gg.item(b).col(t) = g.matrix();
          go.item(b).col(t) = o.matrix();
          gc.item(b).col(t) = cs;
        }
      }
    }
    if (tr) {
      tr[1][dir].push_back(std::move(gi));
      tr[2][dir].push_back(std::move(gf));
      tr[3][dir].push_back(std::move(gg));
      tr[4][dir].push_back(std::move(go));
      tr[5][dir].push_back(std::move(gc));
    }
    cur = std::move(nxt);
  }
  return cur;
}

}  // namespace detail

// Full offline pass: scale, pad, upsample, encode, sequence model, decode with
// skip connections, downsample, unscale, trim. When trace is given every
// intermediate needed for gradients is recorded.
template <std::floating_point S>
Tensor<S> forward(const ModelParams<S>& params, const ModelConfig& cfg, const Tensor<S>& x,
                  Trace<S>* trace = nullptr) {
  cfg.validate();
  require(x.channels() == 1, "forward: expected a single channel");
  require(x.time() >= 1, "forward: empty input");
  require(params.enc.size() == size_t(cfg.depth), "forward: params do not match config depth");
  const Index t_in = x.time();
  const Index t_pad = valid_length(cfg, t_in);

  std::vector<double> factor(x.batch(), 1.0);
  Tensor<S> padded(x.batch(), 1, t_pad);
  for (Index b = 0; b < x.batch(); ++b) {
    if (cfg.normalize) {
      double sum = 0, sumsq = 0;
      for (Index t = 0; t < t_in; ++t) {
        const double v = x(b, 0, t);
        sum += v;
        sumsq += v * v;
      }
      const double mean = sum / double(t_in);
      const double var = std::max(0.0, sumsq / double(t_in) - mean * mean);
      factor[b] = 1.0 / (cfg.floor_std + std::sqrt(var));
    }
    padded.row(b, 0).head(t_in) = x.row(b, 0) * S(factor[b]);
  }

  Tensor<S> cur = upsample_factor(padded, cfg.resample);
  if (trace) {
    trace->time_in = t_in;
    trace->time_padded = t_pad;
    trace->factor = factor;
    trace->up = cur;
  }

  std::vector<Tensor<S>> skips;
  for (Index i = 0; i < cfg.depth; ++i) {
    const auto& e = params.enc[i];
    ConvSpec conv{cfg.enc_in(i), cfg.enc_out(i), cfg.kernel, cfg.stride};
    Tensor<S> pre = conv1d(cur, e.conv_w, e.conv_b, conv);
    Tensor<S> act = relu(pre);
    ConvSpec mix{cfg.enc_out(i), 2 * cfg.enc_out(i), 1, 1};
    Tensor<S> gate = conv1d(act, e.mix_w, e.mix_b, mix);
    cur = glu(gate);
    skips.push_back(cur);
    if (trace) {
      trace->enc_pre.push_back(std::move(pre));
      trace->enc_act.push_back(std::move(act));
      trace->enc_gate.push_back(std::move(gate));
      trace->enc_out.push_back(cur);
    }
  }

  std::vector<std::vector<Tensor<S>>> ltr[6];
  auto* ltr_ptr = trace ? ltr : nullptr;
  Tensor<S> seq;
  if (cfg.causal) {
    seq = detail::lstm_stack(cur, params.lstm, ltr_ptr, 0);
  } else {
    require(!params.lstm_rev.empty() && params.merge_w.size() > 0,
            "forward: bidirectional params missing");
    Tensor<S> fwd = detail::lstm_stack(cur, params.lstm, ltr_ptr, 0);
    Tensor<S> rev = time_reverse(detail::lstm_stack(time_reverse(cur), params.lstm_rev, ltr_ptr, 1));
    Tensor<S> cat(cur.batch(), 2 * cfg.bottleneck(), cur.time());
    for (Index b = 0; b < cur.batch(); ++b) {
      cat.item(b).topRows(cfg.bottleneck()) = fwd.item(b);
      cat.item(b).bottomRows(cfg.bottleneck()) = rev.item(b);
    }
    seq = linear(cat, params.merge_w, params.merge_b);
    if (trace) trace->lstm_cat = cat;
  }
  if (trace) {
    trace->lstm_in = std::move(ltr[0]);
    trace->lstm_i = std::move(ltr[1]);
    trace->lstm_f = std::move(ltr[2]);
    trace->lstm_g = std::move(ltr[3]);
    trace->lstm_o = std::move(ltr[4]);
    trace->lstm_c = std::move(ltr[5]);
    trace->lstm_out = seq;
  }
  cur = std::move(seq);

  for (Index d = 0; d < cfg.depth; ++d) {
    const Index i = cfg.depth - 1 - d;  // mirrored encoder layer
    const auto& layer = params.dec[d];
    const Tensor<S>& skip = skips[i];
    require(cur.time() <= skip.time(), "forward: decoder output longer than skip");
    Tensor<S> sum = cur;
    for (Index b = 0; b < cur.batch(); ++b)
      sum.item(b) += skip.item(b).leftCols(cur.time());
    ConvSpec mix{cfg.enc_out(i), 2 * cfg.enc_out(i), 1, 1};
    Tensor<S> gate = conv1d(sum, layer.mix_w, layer.mix_b, mix);
    Tensor<S> act = glu(gate);
    ConvSpec tconv{cfg.enc_out(i), cfg.enc_in(i), cfg.kernel, cfg.stride};
    Tensor<S> pre = conv_transpose1d(act, layer.tconv_w, layer.tconv_b, tconv);
    cur = i > 0 ? relu(pre) : pre;
    if (trace) {
      trace->dec_sum.push_back(std::move(sum));
      trace->dec_gate.push_back(std::move(gate));
      trace->dec_act.push_back(std::move(act));
      trace->dec_pre.push_back(std::move(pre));
    }
  }
  require(cur.time() == t_pad * cfg.resample, "forward: decoder did not restore the padded length");
  if (trace) trace->bottom = cur;

  Tensor<S> down = downsample_factor(cur, cfg.resample);
  Tensor<S> out(x.batch(), 1, t_in);
  for (Index b = 0; b < x.batch(); ++b)
    out.row(b, 0) = down.row(b, 0).head(t_in) / S(factor[b]);
  return out;
}

}  // namespace wden
