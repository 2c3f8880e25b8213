#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wden/fft.hpp"
#include "wden/tensor.hpp"

namespace wden {

constexpr double kMagFloor = 1e-7;  // magnitude floor before the log loss

struct StftConfig {
  Index n_fft = 512;
  Index hop = 50;
  Index win_length = 240;

  void validate() const {
    require(n_fft >= 2 && hop >= 1 && win_length >= 1, "stft: sizes must be positive");
    require(win_length <= n_fft, "stft: window longer than fft size");
    require(hop <= win_length, "stft: hop larger than window");
  }
};

// The three resolutions the multi-scale spectral loss runs at.
inline std::vector<StftConfig> default_resolutions() {
  return {{512, 50, 240}, {1024, 120, 600}, {2048, 240, 1200}};
}

struct LossReport {
  double l1 = 0;
  std::vector<double> sc, mag;  // one entry per resolution
  double beta = 0;
  double total = 0;
};

namespace detail {

// Periodic Hann of win_length, centered in an n_fft-long buffer.
inline std::vector<double> padded_window(const StftConfig& cfg) {
  std::vector<double> w(size_t(cfg.n_fft), 0.0);
  const Index off = (cfg.n_fft - cfg.win_length) / 2;
  for (Index t = 0; t < cfg.win_length; ++t)
    w[size_t(off + t)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(t) / double(cfg.win_length));
  return w;
}

inline Index reflect_index(Index s, Index n) {
  if (s < 0) s = -s;
  if (s >= n) s = 2 * n - 2 - s;
  return s;
}

inline Index stft_frames(Index t, const StftConfig& cfg) { return t / cfg.hop + 1; }

// Complex onesided spectra, frames x (n_fft/2 + 1), centered frames over a
// reflect-padded signal.
template <std::floating_point S>
std::vector<std::vector<Complex>> stft_complex(const VectorX<S>& x, const StftConfig& cfg) {
  cfg.validate();
  const Index t_n = x.size(), pad = cfg.n_fft / 2;
  require(t_n >= cfg.win_length && t_n > pad, "stft: signal too short");
  const std::vector<double> win = padded_window(cfg);
  const Index frames = stft_frames(t_n, cfg), bins = cfg.n_fft / 2 + 1;

  std::vector<std::vector<Complex>> out(static_cast<size_t>(frames));
  std::vector<Complex> buf(size_t(cfg.n_fft));
  for (Index f = 0; f < frames; ++f) {
    for (Index t = 0; t < cfg.n_fft; ++t) {
      const Index src = reflect_index(f * cfg.hop + t - pad, t_n);
      buf[size_t(t)] = Complex(win[size_t(t)] * double(x[src]), 0.0);
    }
    dft(buf, false);
    out[size_t(f)].assign(buf.begin(), buf.begin() + bins);
  }
  return out;
}

template <std::floating_point S>
MatrixX<double> magnitudes(const VectorX<S>& x, const StftConfig& cfg) {
  const auto spec = stft_complex(x, cfg);
  MatrixX<double> m(Index(spec.size()), Index(spec.empty() ? 0 : spec[0].size()));
  for (Index f = 0; f < m.rows(); ++f)
    for (Index k = 0; k < m.cols(); ++k) m(f, k) = std::abs(spec[size_t(f)][size_t(k)]);
  return m;
}

}  // namespace detail

// Hann-windowed magnitude spectrogram, frames x (n_fft/2 + 1).
template <std::floating_point S>
MatrixX<S> stft_mag(const VectorX<S>& x, const StftConfig& cfg) {
  return detail::magnitudes(x, cfg).template cast<S>();
}

// Spectral convergence: Frobenius distance of magnitudes over the reference
// norm. Both-silent compares equal and scores 0; only a silent reference with
// a non-silent estimate is undefined and rejected.
template <std::floating_point S>
double loss_sc(const VectorX<S>& y, const VectorX<S>& y_hat, const StftConfig& cfg) {
  require(y.size() == y_hat.size(), "loss: length mismatch");
  const MatrixX<double> my = detail::magnitudes(y, cfg), mh = detail::magnitudes(y_hat, cfg);
  const double ref = my.norm(), diff = (mh - my).norm();
  if (ref == 0.0) {
    if (diff == 0.0) return 0.0;
    throw std::invalid_argument("loss_sc: reference has zero spectral energy");
  }
  return diff / ref;
}

// Log-magnitude L1, normalized by the waveform length; magnitudes floored
// before the log so silence is well-defined.
template <std::floating_point S>
double loss_mag(const VectorX<S>& y, const VectorX<S>& y_hat, const StftConfig& cfg) {
  require(y.size() == y_hat.size(), "loss: length mismatch");
  const MatrixX<double> my = detail::magnitudes(y, cfg), mh = detail::magnitudes(y_hat, cfg);
  double acc = 0;
  for (Index f = 0; f < my.rows(); ++f)
    for (Index k = 0; k < my.cols(); ++k)
      acc += std::abs(std::log(std::max(my(f, k), kMagFloor)) - std::log(std::max(mh(f, k), kMagFloor)));
  return acc / double(y.size());
}

// Waveform L1 plus beta-weighted spectral terms at every resolution.
template <std::floating_point S>
LossReport total_loss(const VectorX<S>& y, const VectorX<S>& y_hat, double beta = 0.5,
                      const std::vector<StftConfig>& resolutions = default_resolutions()) {
  require(y.size() == y_hat.size(), "loss: length mismatch");
  require(y.size() >= 1, "loss: empty signal");
  LossReport r;
  r.beta = beta;
  double acc = 0;
  for (Index t = 0; t < y.size(); ++t) acc += std::abs(double(y[t]) - double(y_hat[t]));
  r.l1 = acc / double(y.size());
  r.total = r.l1;
  for (const auto& cfg : resolutions) {
    r.sc.push_back(loss_sc(y, y_hat, cfg));
    r.mag.push_back(loss_mag(y, y_hat, cfg));
    r.total += beta * (r.sc.back() + r.mag.back());
  }
  return r;
}

// Gradient of total_loss with respect to y_hat. The spectral chain runs
// magnitude -> complex spectrum -> windowed frames -> reflect-padded signal,
// each step transposed explicitly; validated against finite differences.
template <std::floating_point S>
VectorX<S> total_loss_backward(const VectorX<S>& y, const VectorX<S>& y_hat, double beta = 0.5,
                               const std::vector<StftConfig>& resolutions = default_resolutions()) {
  require(y.size() == y_hat.size(), "loss: length mismatch");
  const Index t_n = y.size();
  VectorX<double> grad = VectorX<double>::Zero(t_n);
  for (Index t = 0; t < t_n; ++t) {
    const double d = double(y_hat[t]) - double(y[t]);
    grad[t] = (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / double(t_n);
  }

  for (const auto& cfg : resolutions) {
    const auto spec_h = detail::stft_complex(y_hat, cfg);
    const MatrixX<double> my = detail::magnitudes(y, cfg);
    const Index frames = Index(spec_h.size()), bins = my.cols();

    MatrixX<double> mh(frames, bins);
    for (Index f = 0; f < frames; ++f)
      for (Index k = 0; k < bins; ++k) mh(f, k) = std::abs(spec_h[size_t(f)][size_t(k)]);

    // d(total)/d(mh)
    MatrixX<double> gm = MatrixX<double>::Zero(frames, bins);
    const MatrixX<double> diff = mh - my;
    const double ref = my.norm(), dn = diff.norm();
    if (ref > 0.0 && dn > 0.0) gm += diff * (beta / (dn * ref));
    for (Index f = 0; f < frames; ++f)
      for (Index k = 0; k < bins; ++k) {
        if (mh(f, k) <= kMagFloor) continue;  // inside the floor the log is constant
        const double s = std::log(std::max(mh(f, k), kMagFloor)) - std::log(std::max(my(f, k), kMagFloor));
        gm(f, k) += beta * (s > 0 ? 1.0 : s < 0 ? -1.0 : 0.0) / (double(t_n) * mh(f, k));
      }

    // through |z| and the transposed DFT / window / reflect padding
    const std::vector<double> win = detail::padded_window(cfg);
    const Index pad = cfg.n_fft / 2;
    std::vector<Complex> gspec(size_t(cfg.n_fft));
    for (Index f = 0; f < frames; ++f) {
      std::fill(gspec.begin(), gspec.end(), Complex(0.0, 0.0));
      for (Index k = 0; k < bins; ++k) {
        const double m = mh(f, k);
        if (m == 0.0 || gm(f, k) == 0.0) continue;
        gspec[size_t(k)] = gm(f, k) / m * spec_h[size_t(f)][size_t(k)];
      }
      dft(gspec, true);  // adjoint of the onesided forward transform
      for (Index t = 0; t < cfg.n_fft; ++t) {
        const double gt = gspec[size_t(t)].real() * win[size_t(t)];
        if (gt == 0.0) continue;
        grad[detail::reflect_index(f * cfg.hop + t - pad, t_n)] += gt;
      }
    }
  }
  return grad.cast<S>();
}

}  // namespace wden
