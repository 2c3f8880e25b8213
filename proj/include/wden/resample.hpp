#pragma once

#include <cmath>

#include "wden/tensor.hpp"

namespace wden {

constexpr Index kSincZeros = 56;  // zero crossings per side of the interpolation filter

// Hann-windowed sinc evaluated at half-integer offsets: taps[j] interpolates a
// midpoint from the 2*zeros nearest samples. Taps are symmetric and scaled to
// exact unit DC gain (raw window truncation leaves ~1e-6 excess).
template <std::floating_point S>
VectorX<S> sinc_taps(Index zeros = kSincZeros) {
  require(zeros >= 1, "resample: zeros must be >= 1");
  const Index n = 2 * zeros;
  VectorX<S> taps(n);
  double sum = 0;
  for (Index j = 0; j < n; ++j) {
    const double t = (double(j) - double(zeros) + 0.5) * M_PI;
    const double sinc = t == 0 ? 1.0 : std::sin(t) / t;
    const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(2 * j + 1) / double(4 * zeros));
    taps[j] = S(sinc * win);
    sum += sinc * win;
  }
  taps /= S(sum);
  return taps;
}

namespace detail {

// Midpoint interpolation of x at t+1/2 for every t; edges treat x as zero.
template <std::floating_point S>
VectorX<S> interp_half(const VectorX<S>& x, const VectorX<S>& taps, Index zeros) {
  const Index t_n = x.size();
  VectorX<S> padded = VectorX<S>::Zero(t_n + 2 * zeros);
  padded.segment(zeros, t_n) = x;
  VectorX<S> out(t_n);
  for (Index t = 0; t < t_n; ++t) out[t] = taps.dot(padded.segment(t + 1, 2 * zeros));
  return out;
}

}  // namespace detail

// x2 upsampling: even outputs reproduce the input exactly, odd outputs are
// sinc-interpolated midpoints.
template <std::floating_point S>
VectorX<S> upsample2(const VectorX<S>& x, Index zeros = kSincZeros) {
  const VectorX<S> taps = sinc_taps<S>(zeros);
  VectorX<S> odd = detail::interp_half(x, taps, zeros);
  VectorX<S> out(2 * x.size());
  for (Index t = 0; t < x.size(); ++t) {
    out[2 * t] = x[t];
    out[2 * t + 1] = odd[t];
  }
  return out;
}

// x2 downsampling: average of the even samples and the midpoint interpolation
// of the odd samples. Odd-length input is zero-padded by one sample.
template <std::floating_point S>
VectorX<S> downsample2(VectorX<S> x, Index zeros = kSincZeros) {
  if (x.size() % 2 != 0) {
    x.conservativeResize(x.size() + 1);
    x[x.size() - 1] = S(0);
  }
  const Index t_n = x.size() / 2;
  VectorX<S> even(t_n), odd(t_n);
  for (Index t = 0; t < t_n; ++t) {
    even[t] = x[2 * t];
    odd[t] = x[2 * t + 1];
  }
  const VectorX<S> taps = sinc_taps<S>(zeros);
  // interp of odd at t-1/2: same kernel as interp_half shifted one slot left
  VectorX<S> padded = VectorX<S>::Zero(t_n + 2 * zeros);
  padded.segment(zeros, t_n) = odd;
  VectorX<S> out(t_n);
  for (Index t = 0; t < t_n; ++t) out[t] = S(0.5) * even[t] + S(0.5) * taps.dot(padded.segment(t, 2 * zeros));
  return out;
}

// Adjoint of upsample2 as a linear map R^T -> R^{2T}; verified by the
// inner-product identity in tests.
template <std::floating_point S>
VectorX<S> upsample2_adjoint(const VectorX<S>& g, Index zeros = kSincZeros) {
  require(g.size() % 2 == 0, "upsample2_adjoint: length must be even");
  const Index t_n = g.size() / 2;
  const VectorX<S> taps = sinc_taps<S>(zeros);
  VectorX<S> acc = VectorX<S>::Zero(t_n + 2 * zeros);
  for (Index t = 0; t < t_n; ++t) acc.segment(t + 1, 2 * zeros) += taps * g[2 * t + 1];
  VectorX<S> out = acc.segment(zeros, t_n);
  for (Index t = 0; t < t_n; ++t) out[t] += g[2 * t];
  return out;
}

// Adjoint of downsample2 restricted to even-length inputs (the only case the
// model pipeline produces).
template <std::floating_point S>
VectorX<S> downsample2_adjoint(const VectorX<S>& g, Index zeros = kSincZeros) {
  const Index t_n = g.size();
  const VectorX<S> taps = sinc_taps<S>(zeros);
  VectorX<S> acc = VectorX<S>::Zero(t_n + 2 * zeros);
  for (Index t = 0; t < t_n; ++t) acc.segment(t, 2 * zeros) += taps * (S(0.5) * g[t]);
  VectorX<S> out(2 * t_n);
  for (Index t = 0; t < t_n; ++t) {
    out[2 * t] = S(0.5) * g[t];
    out[2 * t + 1] = acc[zeros + t];
  }
  return out;
}

inline void require_factor(Index factor) {
  require(factor == 1 || factor == 2 || factor == 4, "resample: factor must be 1, 2, or 4");
}

template <std::floating_point S>
VectorX<S> upsample_factor(const VectorX<S>& x, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  VectorX<S> out = x;
  for (Index f = 1; f < factor; f *= 2) out = upsample2(out, zeros);
  return out;
}

template <std::floating_point S>
VectorX<S> downsample_factor(const VectorX<S>& x, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  VectorX<S> out = x;
  for (Index f = 1; f < factor; f *= 2) out = downsample2(out, zeros);
  return out;
}

template <std::floating_point S>
VectorX<S> upsample_factor_adjoint(const VectorX<S>& g, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  VectorX<S> out = g;
  for (Index f = 1; f < factor; f *= 2) out = upsample2_adjoint(out, zeros);
  return out;
}

template <std::floating_point S>
VectorX<S> downsample_factor_adjoint(const VectorX<S>& g, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  VectorX<S> out = g;
  for (Index f = 1; f < factor; f *= 2) out = downsample2_adjoint(out, zeros);
  return out;
}

// Tensor forms: rows resampled independently.
template <std::floating_point S, typename Fn>
Tensor<S> map_rows(const Tensor<S>& x, Index out_time, Fn&& fn) {
  Tensor<S> out(x.batch(), x.channels(), out_time);
  for (Index b = 0; b < x.batch(); ++b)
    for (Index c = 0; c < x.channels(); ++c) {
      VectorX<S> r = x.row(b, c).transpose();
      out.row(b, c) = fn(r).transpose();
    }
  return out;
}

template <std::floating_point S>
Tensor<S> upsample_factor(const Tensor<S>& x, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  return map_rows(x, x.time() * factor, [&](const VectorX<S>& r) { return upsample_factor(r, factor, zeros); });
}

template <std::floating_point S>
Tensor<S> downsample_factor(const Tensor<S>& x, Index factor, Index zeros = kSincZeros) {
  require_factor(factor);
  require(factor == 1 || x.time() % factor == 0, "downsample: length must divide factor");
  return map_rows(x, x.time() / factor, [&](const VectorX<S>& r) { return downsample_factor(r, factor, zeros); });
}

}  // namespace wden
