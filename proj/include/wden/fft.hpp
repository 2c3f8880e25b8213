#pragma once

#include <complex>
#include <vector>

#include "wden/tensor.hpp"

namespace wden {

using Complex = std::complex<double>;

inline bool is_pow2(Index n) { return n >= 1 && (n & (n - 1)) == 0; }

// Iterative radix-2 transform, unnormalized in both directions.
inline void fft_radix2(std::vector<Complex>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / double(len);
    const Complex step(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const Complex u = a[i + j];
        const Complex v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

// Quadratic fallback so non power-of-two sizes still work.
inline std::vector<Complex> dft_naive(const std::vector<Complex>& a, bool inverse) {
  const size_t n = a.size();
  std::vector<Complex> out(n);
  for (size_t k = 0; k < n; ++k) {
    Complex acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double ang = (inverse ? 2.0 : -2.0) * M_PI * double(k * t % n) / double(n);
      acc += a[t] * Complex(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Unnormalized DFT of any length; power-of-two sizes take the fast path.
inline void dft(std::vector<Complex>& a, bool inverse) {
  if (is_pow2(Index(a.size())))
    fft_radix2(a, inverse);
  else
    a = dft_naive(a, inverse);
}

}  // namespace wden
