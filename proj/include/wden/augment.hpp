#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "wden/model.hpp"
#include "wden/tensor.hpp"

namespace wden {

// A training pair; the model input is always mixture() = clean + noise.
template <std::floating_point S>
struct PairBatch {
  Tensor<S> clean;
  Tensor<S> noise;

  void check() const {
    require(clean.same_shape(noise), "augment: clean/noise shape mismatch");
    require(clean.channels() == 1, "augment: expected single-channel pairs");
  }
};

template <std::floating_point S>
Tensor<S> mixture(const PairBatch<S>& p) {
  p.check();
  Tensor<S> x = p.clean;
  x.raw() += p.noise.raw();
  return x;
}

inline double mel_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Zero-phase Hann-windowed-sinc lowpass, `same` length. cutoff is a fraction
// of the sample rate in (0, 0.5); kernel half-width grows as zeros / (2 fc),
// and cutoffs below hearing (< 1e-4) collapse to silence.
template <std::floating_point S>
VectorX<S> lowpass(const VectorX<S>& x, double cutoff, Index zeros = 8) {
  require(zeros >= 1, "lowpass: zeros must be >= 1");
  if (cutoff >= 0.5) return x;
  if (cutoff < 1e-4) return VectorX<S>::Zero(x.size());
  const Index half = Index(std::ceil(double(zeros) / (2.0 * cutoff)));
  VectorX<double> h(2 * half + 1);
  for (Index j = -half; j <= half; ++j) {
    const double t = 2.0 * cutoff * double(j);
    const double sinc = j == 0 ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
    const double win = 0.5 + 0.5 * std::cos(M_PI * double(j) / double(half));
    h[j + half] = 2.0 * cutoff * sinc * win;
  }
  const Index t_n = x.size();
  VectorX<S> out(t_n);
  for (Index t = 0; t < t_n; ++t) {
    double acc = 0;
    const Index j0 = std::max<Index>(-half, t - t_n + 1), j1 = std::min<Index>(half, t);
    for (Index j = j0; j <= j1; ++j) acc += h[j + half] * double(x[t - j]);
    out[t] = S(acc);
  }
  return out;
}

// Band-stop between two cutoffs: everything below f0 plus everything above f1.
template <std::floating_point S>
VectorX<S> bandstop(const VectorX<S>& x, double f0, double f1, Index zeros = 8) {
  require(0.0 <= f0 && f0 <= f1 && f1 <= 0.5, "bandstop: cutoffs must satisfy 0 <= f0 <= f1 <= 0.5");
  if (f0 == f1) return x;  // zero-width band removes nothing
  return lowpass(x, f0, zeros) + (x - lowpass(x, f1, zeros));
}

// Random time shift, identical offset for clean and noise of each item so the
// pair stays aligned; output is trimmed to the common covered length.
template <std::floating_point S>
PairBatch<S> shift(const PairBatch<S>& p, Index max_shift, std::mt19937_64& rng) {
  p.check();
  const Index t_n = p.clean.time();
  require(max_shift >= 0 && max_shift < t_n, "shift: max_shift must be in [0, T)");
  const Index t_out = t_n - max_shift;
  PairBatch<S> out{Tensor<S>(p.clean.batch(), 1, t_out), Tensor<S>(p.clean.batch(), 1, t_out)};
  for (Index b = 0; b < p.clean.batch(); ++b) {
    const Index k = std::min<Index>(max_shift, Index(uniform_unit(rng) * double(max_shift + 1)));
    out.clean.row(b, 0) = p.clean.row(b, 0).segment(k, t_out);
    out.noise.row(b, 0) = p.noise.row(b, 0).segment(k, t_out);
  }
  return out;
}

// Shuffles which noise accompanies which clean signal within the batch. A
// single-item batch has nothing to shuffle and passes through; callers that
// care warn about it.
template <std::floating_point S>
PairBatch<S> remix(const PairBatch<S>& p, std::mt19937_64& rng) {
  p.check();
  PairBatch<S> out = p;
  for (Index i = out.noise.batch() - 1; i > 0; --i) {
    const Index j = std::min<Index>(i, Index(uniform_unit(rng) * double(i + 1)));
    out.noise.row(i, 0).swap(out.noise.row(j, 0));
  }
  return out;
}

// Band placed uniformly on the mel axis, covering `width` of it; returned as
// cutoff fractions of the sample rate.
struct MelBand {
  double f0 = 0, f1 = 0;
};

inline MelBand sample_mel_band(double width, std::mt19937_64& rng, Index sample_rate = 16000) {
  require(width > 0.0 && width < 1.0, "bandmask: width must be in (0, 1)");
  const double m_top = mel_hz(double(sample_rate) / 2.0);
  const double m0 = uniform_unit(rng) * m_top * (1.0 - width);
  return {mel_to_hz(m0) / double(sample_rate), mel_to_hz(m0 + width * m_top) / double(sample_rate)};
}

// Removes one mel-uniform band, `width` of the mel axis, from clean and noise
// alike so target and input stay consistent. One band per call.
template <std::floating_point S>
PairBatch<S> bandmask(const PairBatch<S>& p, double width, std::mt19937_64& rng,
                      Index sample_rate = 16000, Index zeros = 8) {
  p.check();
  const MelBand band = sample_mel_band(width, rng, sample_rate);
  const double f0 = band.f0, f1 = band.f1;
  PairBatch<S> out = p;
  for (Index b = 0; b < p.clean.batch(); ++b) {
    out.clean.row(b, 0) = bandstop(VectorX<S>(p.clean.row(b, 0).transpose()), f0, f1, zeros).transpose();
    out.noise.row(b, 0) = bandstop(VectorX<S>(p.noise.row(b, 0).transpose()), f0, f1, zeros).transpose();
  }
  return out;
}

// Echo series shape: gains decay geometrically so the echo arriving at RT60
// has fallen to 1e-3 of the first.
struct RevechoParams {
  double lambda = 0.0;   // first-echo gain
  double tau_s = 0.02;   // early delay, seconds
  double rt60_s = 0.6;   // decay horizon, seconds

  double rho() const { return std::pow(1e-3, tau_s / rt60_s); }
  Index echoes() const { return Index(std::ceil(rt60_s / tau_s)); }
};

struct RevechoOptions {
  bool two_sources = false;  // independently jittered series for clean and noise
  bool keep_reverb = false;  // echoes of clean stay in the target instead of the noise
  double jitter = 0.1;       // multiplicative U[1-j, 1+j] on each echo delay
};

// Sum of delayed, geometrically decaying copies; delays[n] carries echo n+1.
template <std::floating_point S>
VectorX<S> echo_train(const VectorX<S>& x, double lambda, double rho,
                      const std::vector<Index>& delays) {
  const Index t_n = x.size();
  VectorX<S> out = VectorX<S>::Zero(t_n);
  double gain = lambda;
  for (const Index d : delays) {
    gain *= rho;
    if (d < 0 || d >= t_n || gain == 0.0) continue;
    out.segment(d, t_n - d) += S(gain) * x.head(t_n - d);
  }
  return out;
}

namespace detail {

inline std::vector<Index> echo_delays(const RevechoParams& rp, double jitter, Index sample_rate,
                                      std::mt19937_64& rng) {
  std::vector<Index> d(size_t(rp.echoes()));
  for (size_t n = 0; n < d.size(); ++n) {
    const double jit = 1.0 + jitter * (2.0 * uniform_unit(rng) - 1.0);
    d[n] = Index(std::llround(double(n + 1) * rp.tau_s * jit * double(sample_rate)));
  }
  return d;
}

}  // namespace detail

// Adds decaying echo series of the clean and the noise. With keep_reverb the
// clean echoes reverberate the target itself; otherwise they are treated as
// part of the noise, so the model learns to remove them.
template <std::floating_point S>
PairBatch<S> revecho(const PairBatch<S>& p, double prob, std::mt19937_64& rng,
                     const RevechoOptions& opt = {}, Index sample_rate = 16000) {
  p.check();
  require(prob >= 0.0 && prob <= 1.0, "revecho: probability must be in [0, 1]");
  PairBatch<S> out = p;
  for (Index b = 0; b < p.clean.batch(); ++b) {
    if (uniform_unit(rng) >= prob) continue;
    RevechoParams rp;
    rp.lambda = 0.3 * uniform_unit(rng);
    rp.tau_s = 0.010 + 0.020 * uniform_unit(rng);
    rp.rt60_s = 0.3 + 1.0 * uniform_unit(rng);
    const std::vector<Index> d_clean = detail::echo_delays(rp, opt.jitter, sample_rate, rng);
    const std::vector<Index> d_noise =
        opt.two_sources ? detail::echo_delays(rp, opt.jitter, sample_rate, rng) : d_clean;
    const VectorX<S> ec =
        echo_train(VectorX<S>(p.clean.row(b, 0).transpose()), rp.lambda, rp.rho(), d_clean);
    const VectorX<S> en =
        echo_train(VectorX<S>(p.noise.row(b, 0).transpose()), rp.lambda, rp.rho(), d_noise);
    out.noise.row(b, 0) += en.transpose();
    if (opt.keep_reverb)
      out.clean.row(b, 0) += ec.transpose();
    else
      out.noise.row(b, 0) += ec.transpose();
  }
  return out;
}

}  // namespace wden
