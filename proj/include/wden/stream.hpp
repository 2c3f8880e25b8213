#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#ifdef __linux__
#include <sched.h>
#endif

#include "wden/model.hpp"
#include "wden/ops.hpp"
#include "wden/resample.hpp"
#include "wden/tensor.hpp"

namespace wden {

// Nominal model lookahead reported in the latency geometry: 3 ms at 16 kHz.
// Emission is quantized to whole strides, and ceil(valid_length(1)/stride)
// strides already cover both this and the interpolation filter's full future
// context, so neither adds latency beyond the stride quantization itself.
inline constexpr Index kStreamLookahead = 48;

namespace detail {

template <std::floating_point S>
void append_cols(RowMajorX<S>& dst, const RowMajorX<S>& src) {
  if (src.cols() == 0) return;
  if (dst.size() == 0) {
    dst = src;
    return;
  }
  const Index old = dst.cols();
  dst.conservativeResize(Eigen::NoChange, old + src.cols());
  dst.rightCols(src.cols()) = src;
}

template <std::floating_point S>
void drop_cols_front(RowMajorX<S>& m, Index n) {
  if (n == 0) return;
  m = RowMajorX<S>(m.rightCols(m.cols() - n));
}

}  // namespace detail

// Frame-by-frame causal inference with a hard equivalence contract against
// the offline forward pass. The caller pushes arbitrary chunks; the engine
// re-chunks to strides internally, so output values depend only on the input
// signal, never on how it was partitioned.
//
// Per absorbed stride: cumulative moments -> normalize by the running std ->
// incremental upsample (frontier delayed by the lookahead so the filter sees
// real future) -> encoder layers consuming buffered columns greedily -> one
// LSTM step per bottleneck column -> decoder step with transposed-conv tail
// overlap-add -> incremental downsample padded with a reconstruction of the
// not-yet-complete decoder output -> inverse scale and dry/wet mix.
//
// Every cache is bounded by the frame geometry: a sample is emitted once the
// strides covering its 40 ms analysis frame have arrived, i.e. at most
// ceil((valid_length(1) + lookahead)/stride) strides after it was pushed.
template <std::floating_point S>
class Streamer {
 public:
  Streamer(const ModelParams<S>& params, const ModelConfig& cfg, double dry = 0.0)
      : params_(&params), cfg_(cfg), dry_(S(dry)) {
    cfg_.validate();
    require(cfg_.causal, "stream: model must be causal");
    require(dry >= 0.0 && dry <= 1.0, "stream: dry must lie in [0, 1]");
    require(params.enc.size() == size_t(cfg_.depth) && params.dec.size() == size_t(cfg_.depth),
            "stream: params do not match config depth");

    u_ = cfg_.resample;
    k_ = cfg_.kernel;
    s_ = cfg_.stride;
    depth_ = cfg_.depth;
    n_up_ = 1;
    for (Index i = 0; i < depth_; ++i) n_up_ *= s_;
    stride_in_ = n_up_ / u_;
    model_in_ = valid_length(cfg_, 1);
    la_ = u_ > 1 ? kStreamLookahead : 0;
    tail_in_ = model_in_ - stride_in_;
    ctx_ = 2 * kSincZeros;
    past_ = u_ > 1 ? ctx_ * u_ : 0;

    enc_buf_.assign(size_t(depth_), RowMajorX<S>());
    skip_buf_.assign(size_t(depth_), RowMajorX<S>());
    tails_.reserve(size_t(depth_));
    for (Index d = 0; d < depth_; ++d)
      tails_.push_back(RowMajorX<S>::Zero(cfg_.enc_in(depth_ - 1 - d), k_ - s_));
    down_past_ = VectorX<S>::Zero(past_);
    lstm_state_ = LstmState<S>::zero(params.lstm, 1);
  }

  const ModelConfig& config() const { return cfg_; }

  // Frame geometry, in input samples and rounded milliseconds.
  Index stride_samples() const { return stride_in_; }
  Index lookahead_samples() const { return la_; }
  Index model_frame_samples() const { return model_in_; }
  Index frame_samples() const { return model_in_ + la_; }
  int stride_ms() const { return ms_round(stride_in_); }
  int lookahead_ms() const { return ms_round(la_); }
  int model_frame_ms() const { return ms_round(model_in_); }
  int frame_ms() const { return ms_round(model_in_ + la_); }

  // Trailing samples of each emitted stride whose value still depends on the
  // downsampler's reconstructed future; the remainder is final. Zero when no
  // resampling happens.
  Index valid_margin() const { return u_ == 1 ? 0 : ((u_ - 1) * ctx_ + u_) / u_; }

  bool closed() const { return closed_; }
  Index received() const { return real_in_; }
  Index emitted() const { return emitted_; }
  Index frames_processed() const { return emitted_blocks_; }

  // Running std snapshot taken as each stride was absorbed; entry k scaled
  // the samples of stride k (its inverse rescales the matching output).
  const std::vector<double>& sigma_history() const { return sigma_log_; }

  std::vector<S> push(const std::vector<S>& x) { return push(x.data(), Index(x.size())); }

  std::vector<S> push(const S* x, Index n) {
    require(!closed_, "stream: push after flush");
    require(n >= 0, "stream: negative sample count");
    stage_.clear();
    if (n == 0) return {};
    pending_.insert(pending_.end(), x, x + n);
    real_in_ += n;
    size_t off = 0;
    while (pending_.size() - off >= size_t(stride_in_)) {
      absorb_stride(pending_.data() + Index(off));
      off += size_t(stride_in_);
    }
    pending_.erase(pending_.begin(), pending_.begin() + ptrdiff_t(off));
    return std::move(stage_);
  }

  // Pads to the offline forward's valid length with zeros (in the normalized
  // domain, matching what forward() pads after scaling), drains the pipeline,
  // emits the decoder tail, and trims so input and output counts agree.
  std::vector<S> flush() {
    require(!closed_, "stream: already flushed");
    closed_ = true;
    stage_.clear();
    if (real_in_ == 0) return {};

    if (cfg_.normalize) {
      for (S v : pending_) {
        mom_sum_ += double(v);
        mom_sumsq_ += double(v) * double(v);
      }
      mom_n_ += double(pending_.size());
    }
    const double sig = running_sigma();
    const S sc = cfg_.normalize ? S(1.0 / (cfg_.floor_std + sig)) : S(1);

    const Index t_star = valid_length(cfg_, real_in_);
    const Index blocks = (t_star + stride_in_ - 1) / stride_in_;
    while (Index(sigma_log_.size()) < blocks) sigma_log_.push_back(sig);
    raw_hist_.insert(raw_hist_.end(), pending_.begin(), pending_.end());
    norm_hist_.reserve(norm_hist_.size() + size_t(t_star - consumed_));
    for (S v : pending_) norm_hist_.push_back(v * sc);
    consumed_ += Index(pending_.size());
    pending_.clear();
    raw_hist_.resize(raw_hist_.size() + size_t(t_star - consumed_), S(0));
    norm_hist_.resize(norm_hist_.size() + size_t(t_star - consumed_), S(0));
    consumed_ = t_star;

    advance_upsampler(true);
    drain_decoder();
    emit_tail(t_star);

    stage_.resize(stage_.size() - size_t(t_star - real_in_));
    emitted_ = real_in_;
    return std::move(stage_);
  }

 private:
  int ms_round(Index samples) const {
    return int(std::lround(1000.0 * double(samples) / double(cfg_.sample_rate)));
  }

  double running_sigma() const {
    if (!cfg_.normalize || mom_n_ == 0) return 0.0;
    const double mean = mom_sum_ / mom_n_;
    return std::sqrt(std::max(0.0, mom_sumsq_ / mom_n_ - mean * mean));
  }

  void absorb_stride(const S* x) {
    if (cfg_.normalize) {
      for (Index t = 0; t < stride_in_; ++t) {
        mom_sum_ += double(x[t]);
        mom_sumsq_ += double(x[t]) * double(x[t]);
      }
      mom_n_ += double(stride_in_);
    }
    const double sig = running_sigma();
    sigma_log_.push_back(sig);
    const S sc = cfg_.normalize ? S(1.0 / (cfg_.floor_std + sig)) : S(1);
    raw_hist_.insert(raw_hist_.end(), x, x + stride_in_);
    for (Index t = 0; t < stride_in_; ++t) norm_hist_.push_back(x[t] * sc);
    consumed_ += stride_in_;

    advance_upsampler(false);
    drain_decoder();
    prune();
  }

  // Extends the upsampled signal to the frontier the schedule allows. An open
  // window holds the frontier a full filter half-width behind the newest
  // sample, so every produced value has complete tap support and matches the
  // offline upsample exactly. The closed window at flush runs to the padded
  // end, where truncation equals the offline zero extension.
  void advance_upsampler(bool final_window) {
    const Index hold = (final_window || u_ == 1) ? 0 : ctx_;
    const Index target = u_ * std::max<Index>(0, consumed_ - hold);
    if (target <= up_frontier_) return;
    const Index a = std::max<Index>(0, up_frontier_ / u_ - ctx_);
    const Index b = consumed_;
    VectorX<S> seg(b - a);
    for (Index t = 0; t < b - a; ++t) seg[t] = norm_hist_[size_t(a + t - hist_base_)];
    VectorX<S> up = upsample_factor(seg, u_);
    feed_encoder(up.segment(up_frontier_ - u_ * a, target - up_frontier_));
    up_frontier_ = target;
  }

  // Runs every encoder layer over whatever whole windows its buffer holds.
  // With valid-only convolutions this produces exactly the offline columns;
  // leftovers stay buffered (at most kernel-1 columns per layer).
  void feed_encoder(const VectorX<S>& fresh) {
    if (fresh.size() == 0) return;
    detail::append_cols(enc_buf_[0], RowMajorX<S>(fresh.transpose()));
    for (Index i = 0; i < depth_; ++i) {
      RowMajorX<S>& buf = enc_buf_[size_t(i)];
      if (buf.cols() < k_) continue;
      const Index n_out = (buf.cols() - k_) / s_ + 1;
      const Index used = (n_out - 1) * s_ + k_;
      const Index cin = cfg_.enc_in(i), cout = cfg_.enc_out(i);
      const auto& lay = params_->enc[size_t(i)];
      Tensor<S> h = conv1d(Tensor<S>::wrap(buf.leftCols(used), 1, cin), lay.conv_w, lay.conv_b,
                           ConvSpec{cin, cout, k_, s_});
      h = glu(conv1d(relu(h), lay.mix_w, lay.mix_b, ConvSpec{cout, 2 * cout, 1, 1}));
      detail::drop_cols_front(buf, n_out * s_);
      detail::append_cols(skip_buf_[size_t(i)], h.raw());
      if (i + 1 < depth_)
        detail::append_cols(enc_buf_[size_t(i + 1)], h.raw());
      else
        detail::append_cols(bottleneck_buf_, h.raw());
    }
  }

  void drain_decoder() {
    while (bottleneck_buf_.cols() >= 1) {
      Tensor<S> z = Tensor<S>::wrap(bottleneck_buf_.leftCols(1), 1, cfg_.bottleneck());
      detail::drop_cols_front(bottleneck_buf_, 1);
      Tensor<S> l = lstm_forward(z, params_->lstm, lstm_state_);
      emit_block(decode_step(l.raw()));
    }
  }

  // One decoder pass over a single bottleneck column: each stage consumes its
  // share of buffered skip columns, completes stride-aligned output columns,
  // and carries the kernel-stride rightmost transposed-conv columns (pre-bias)
  // into the next step's overlap-add.
  VectorX<S> decode_step(RowMajorX<S> x) {
    for (Index d = 0; d < depth_; ++d) {
      const Index i = depth_ - 1 - d;
      const Index n = x.cols();
      require(skip_buf_[size_t(i)].cols() >= n, "stream: skip buffer underrun");
      x += skip_buf_[size_t(i)].leftCols(n);
      detail::drop_cols_front(skip_buf_[size_t(i)], n);
      RowMajorX<S> full = stage_scatter(d, x);
      full.leftCols(k_ - s_) += tails_[size_t(d)];
      tails_[size_t(d)] = full.rightCols(k_ - s_);
      x = full.leftCols(n * s_);
      x.colwise() += params_->dec[size_t(d)].tconv_b;
      if (i > 0) x = x.cwiseMax(S(0));
    }
    return x.row(0).transpose();
  }

  // Mix + GLU + transposed conv of decoder stage d, without bias, covering
  // (n-1)*stride + kernel columns.
  RowMajorX<S> stage_scatter(Index d, const RowMajorX<S>& x) const {
    const Index i = depth_ - 1 - d;
    const Index cin = cfg_.enc_out(i), cout = cfg_.enc_in(i);
    const auto& lay = params_->dec[size_t(d)];
    Tensor<S> t = glu(conv1d(Tensor<S>::wrap(x, 1, cin), lay.mix_w, lay.mix_b,
                             ConvSpec{cin, 2 * cin, 1, 1}));
    Tensor<S> sc = conv_transpose1d(t, lay.tconv_w, VectorX<S>(VectorX<S>::Zero(cout)),
                                    ConvSpec{cin, cout, k_, s_});
    return sc.raw();
  }

  // Best-effort image of the decoder output beyond the completed columns:
  // propagates the carried tails through the remaining stages, adding the
  // buffered skip surplus each layer already produced. Used as forward
  // context for the incremental downsampler; it becomes exact at flush, when
  // no further bottleneck columns can arrive.
  VectorX<S> reconstruct_future() const {
    if (k_ == s_) return VectorX<S>();
    RowMajorX<S> fut = tails_[0];
    fut.colwise() += params_->dec[0].tconv_b;
    for (Index d = 1; d < depth_; ++d) {
      const Index i = depth_ - 1 - d;
      fut = fut.cwiseMax(S(0));
      const Index m = std::min(fut.cols(), skip_buf_[size_t(i)].cols());
      fut.leftCols(m) += skip_buf_[size_t(i)].leftCols(m);
      RowMajorX<S> full = stage_scatter(d, fut);
      full.leftCols(k_ - s_) += tails_[size_t(d)];
      full.colwise() += params_->dec[size_t(d)].tconv_b;
      fut = full;
    }
    return fut.row(0).transpose();
  }

  // Turns one completed bottom-rate block into stride_in_ output samples:
  // downsample over [past | block | reconstructed future], undo the block's
  // input scale, mix with the dry signal.
  void emit_block(const VectorX<S>& bottom) {
    const Index j = emitted_blocks_;
    VectorX<S> out;
    if (u_ == 1) {
      out = bottom;
    } else {
      // Clamp the window to the true signal start: the cascaded downsampler
      // zeroes its intermediate signal outside the array, so the left edge
      // must coincide with position 0 to reproduce the offline boundary.
      const Index block_start = j * n_up_;
      const Index left = std::min(past_, block_start);
      VectorX<S> fut = reconstruct_future();
      VectorX<S> v = VectorX<S>::Zero(left + n_up_ + ctx_ * u_);
      v.head(left) = down_past_.tail(left);
      v.segment(left, n_up_) = bottom;
      const Index take = std::min<Index>(fut.size(), ctx_ * u_);
      v.segment(left + n_up_, take) = fut.head(take);
      out = downsample_factor(v, u_).segment(left / u_, stride_in_);
      VectorX<S> cat(past_ + n_up_);
      cat << down_past_, bottom;
      down_past_ = cat.tail(past_);
    }
    const S unscale = cfg_.normalize ? S(cfg_.floor_std + sigma_log_[size_t(j)]) : S(1);
    const Index start = j * stride_in_;
    for (Index t = 0; t < stride_in_; ++t) {
      const S raw = raw_hist_[size_t(start + t - raw_base_)];
      stage_.push_back(dry_ * raw + (S(1) - dry_) * out[t] * unscale);
    }
    ++emitted_blocks_;
    emitted_ += stride_in_;
  }

  // After the last bottleneck column, the reconstruction is the remaining
  // model_in_ - stride_in_ output samples exactly.
  void emit_tail(Index t_star) {
    const Index len = t_star - emitted_blocks_ * stride_in_;
    if (len == 0) return;
    VectorX<S> fut = reconstruct_future();
    require(fut.size() == u_ * len, "stream: tail length mismatch");
    VectorX<S> out;
    if (u_ == 1) {
      out = std::move(fut);
    } else {
      // Both window edges coincide with true signal boundaries here, so the
      // downsampler's own zero extension matches the offline run on each side.
      const Index start_up = emitted_blocks_ * n_up_;
      const Index left = std::min(past_, start_up);
      VectorX<S> v(left + u_ * len);
      v.head(left) = down_past_.tail(left);
      v.segment(left, u_ * len) = fut;
      out = downsample_factor(v, u_).segment(left / u_, len);
    }
    const Index start = emitted_blocks_ * stride_in_;
    for (Index t = 0; t < len; ++t) {
      const Index g = start + t;
      const S unscale =
          cfg_.normalize ? S(cfg_.floor_std + sigma_log_[size_t(g / stride_in_)]) : S(1);
      stage_.push_back(dry_ * raw_hist_[size_t(g - raw_base_)] + (S(1) - dry_) * out[t] * unscale);
    }
    emitted_ += len;
  }

  void prune() {
    const Index keep_raw = emitted_blocks_ * stride_in_;
    if (keep_raw > raw_base_) {
      raw_hist_.erase(raw_hist_.begin(), raw_hist_.begin() + ptrdiff_t(keep_raw - raw_base_));
      raw_base_ = keep_raw;
    }
    const Index keep = std::max<Index>(0, up_frontier_ / u_ - ctx_ - 1);
    if (keep > hist_base_) {
      norm_hist_.erase(norm_hist_.begin(), norm_hist_.begin() + ptrdiff_t(keep - hist_base_));
      hist_base_ = keep;
    }
  }

  const ModelParams<S>* params_;
  ModelConfig cfg_;
  S dry_;

  Index u_ = 1, k_ = 1, s_ = 1, depth_ = 1;
  Index n_up_ = 1;      // bottom-rate samples per block (stride^depth)
  Index stride_in_ = 1; // input samples per block
  Index model_in_ = 1;  // receptive frame, input samples
  Index la_ = 0;
  Index tail_in_ = 0;   // flush tail, input samples
  Index ctx_ = 0;       // resampler half-window, source samples
  Index past_ = 0;      // downsampler history, bottom-rate samples

  std::vector<S> pending_;   // raw samples short of a whole stride
  Index real_in_ = 0;        // samples the caller pushed
  Index consumed_ = 0;       // samples absorbed, including flush padding
  double mom_n_ = 0, mom_sum_ = 0, mom_sumsq_ = 0;
  std::vector<double> sigma_log_;
  std::vector<S> raw_hist_;  // raw samples awaiting the dry mix
  Index raw_base_ = 0;       // absolute index of raw_hist_[0]
  std::vector<S> norm_hist_; // normalized samples the upsampler may still read
  Index hist_base_ = 0;      // absolute index of norm_hist_[0]

  Index up_frontier_ = 0;    // upsampled samples handed to the encoder
  std::vector<RowMajorX<S>> enc_buf_;
  std::vector<RowMajorX<S>> skip_buf_;
  RowMajorX<S> bottleneck_buf_;
  LstmState<S> lstm_state_;
  std::vector<RowMajorX<S>> tails_;  // pre-bias transposed-conv leftovers
  VectorX<S> down_past_;

  Index emitted_blocks_ = 0;
  Index emitted_ = 0;
  bool closed_ = false;
  std::vector<S> stage_;     // emissions of the current push/flush call
};

struct StreamReport {
  double frame_ms = 0, stride_ms = 0, lookahead_ms = 0;  // geometry, exact
  std::vector<double> frame_times_ms;
  double mean_ms = 0, p95_ms = 0, rtf = 0;  // rtf = mean frame time / stride duration
  Index frames = 0;
  bool pinned = false;
};

struct BenchOptions {
  bool pin = false;                 // pin the worker to one core before timing
  std::function<void()> per_frame;  // runs inside each timed region
};

inline bool pin_current_thread() {
#ifdef __linux__
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(0, &set);
  return sched_setaffinity(0, sizeof(set), &set) == 0;
#else
  return false;
#endif
}

// Times one push per stride over the input; the remainder is pushed untimed
// so stream accounting stays whole. The stream is left open.
template <std::floating_point S>
StreamReport bench(Streamer<S>& st, const std::vector<S>& input, const BenchOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  StreamReport r;
  const double sr = double(st.config().sample_rate);
  r.frame_ms = 1000.0 * double(st.frame_samples()) / sr;
  r.stride_ms = 1000.0 * double(st.stride_samples()) / sr;
  r.lookahead_ms = 1000.0 * double(st.lookahead_samples()) / sr;
  if (opt.pin) r.pinned = pin_current_thread();

  const Index stride = st.stride_samples();
  Index off = 0;
  while (off + stride <= Index(input.size())) {
    const auto t0 = clock::now();
    st.push(input.data() + off, stride);
    if (opt.per_frame) opt.per_frame();
    const auto t1 = clock::now();
    r.frame_times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    off += stride;
  }
  if (off < Index(input.size())) st.push(input.data() + off, Index(input.size()) - off);

  r.frames = Index(r.frame_times_ms.size());
  if (r.frames > 0) {
    double sum = 0;
    for (double v : r.frame_times_ms) sum += v;
    r.mean_ms = sum / double(r.frames);
    std::vector<double> sorted = r.frame_times_ms;
    std::sort(sorted.begin(), sorted.end());
    const size_t at = size_t(std::ceil(0.95 * double(sorted.size()))) - 1;
    r.p95_ms = sorted[std::min(at, sorted.size() - 1)];
    r.rtf = r.mean_ms / r.stride_ms;
  }
  return r;
}

}  // namespace wden
