#include <cmath>
#include <random>

#include "doctest.h"
#include "wden/model.hpp"
#include "wden/resample.hpp"

using namespace wden;

namespace {

template <typename S>
VectorX<S> tone(Index n, double freq, double rate) {
  VectorX<S> x(n);
  for (Index t = 0; t < n; ++t) x[t] = S(std::sin(2.0 * M_PI * freq * double(t) / rate));
  return x;
}

double snr_db(const VectorX<double>& ref, const VectorX<double>& got) {
  REQUIRE(ref.size() == got.size());
  const double sig = ref.squaredNorm();
  const double err = (ref - got).squaredNorm();
  return 10.0 * std::log10(sig / std::max(err, 1e-300));
}

}  // namespace

TEST_CASE("interpolation taps are symmetric with exact unit DC gain") {
  const VectorX<double> taps = sinc_taps<double>(kSincZeros);
  REQUIRE(taps.size() == 2 * kSincZeros);
  for (Index j = 0; j < taps.size() / 2; ++j)
    CHECK(taps[j] == doctest::Approx(taps[taps.size() - 1 - j]).epsilon(1e-14));
  CHECK(std::abs(taps.sum() - 1.0) < 1e-12);
  // center taps dominate and interpolate the midpoint of neighbours
  CHECK(taps[kSincZeros - 1] == doctest::Approx(taps[kSincZeros]).epsilon(1e-14));
  CHECK(taps[kSincZeros] > 0.6);
}

TEST_CASE("upsample2 keeps even samples bit-exact and scatters taps on odds") {
  const Index n = 256, p = 128, z = kSincZeros;
  VectorX<double> x = VectorX<double>::Zero(n);
  x[p] = 1.0;
  VectorX<double> up = upsample2(x);
  REQUIRE(up.size() == 2 * n);
  for (Index t = 0; t < n; ++t) CHECK(up[2 * t] == x[t]);
  const VectorX<double> taps = sinc_taps<double>(z);
  for (Index j = 0; j < 2 * z; ++j)
    CHECK(up[2 * (p + z - 1 - j) + 1] == doctest::Approx(taps[j]).epsilon(1e-14));
}

TEST_CASE("constant input stays constant away from the edges") {
  const Index n = 300;
  VectorX<double> x = VectorX<double>::Constant(n, 0.7);
  VectorX<double> up = upsample2(x);
  for (Index t = kSincZeros; t + kSincZeros < n; ++t)
    CHECK(up[2 * t + 1] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("band-limited tone round trip: interior SNR well above the 40 dB floor") {
  // edge transients span the filter half-length, so judge the interior only
  const Index n = 4096, skip = 2 * kSincZeros;
  const VectorX<double> x = tone<double>(n, 1000.0, 16000.0);
  const VectorX<double> rt = downsample2(upsample2(x));
  REQUIRE(rt.size() == x.size());
  CHECK(snr_db(x.segment(skip, n - 2 * skip), rt.segment(skip, n - 2 * skip)) > 100.0);

  const VectorX<float> xf = tone<float>(n, 1000.0, 16000.0);
  const VectorX<float> rtf = downsample2(upsample2(xf));
  CHECK(snr_db(xf.cast<double>().segment(skip, n - 2 * skip),
               rtf.cast<double>().segment(skip, n - 2 * skip)) > 100.0);
}

TEST_CASE("alternating Nyquist signal is attenuated toward zero by downsample2") {
  const Index n = 512;
  VectorX<double> x(n);
  for (Index t = 0; t < n; ++t) x[t] = (t % 2 == 0) ? 1.0 : -1.0;
  VectorX<double> d = downsample2(x);
  CHECK(d.squaredNorm() / x.squaredNorm() < 0.01);
  // interior midpoints of the upsampled version cancel exactly by tap symmetry
  VectorX<double> up = upsample2(x);
  for (Index t = kSincZeros; t + kSincZeros < n; ++t)
    CHECK(std::abs(up[2 * t + 1]) < 1e-12);
}

TEST_CASE("upsample2 and downsample2 adjoints satisfy the inner product identity") {
  std::mt19937_64 rng(31);
  const Index n = 128;
  VectorX<double> x(n), y(2 * n);
  for (Index i = 0; i < n; ++i) x[i] = 2.0 * uniform_unit(rng) - 1.0;
  for (Index i = 0; i < 2 * n; ++i) y[i] = 2.0 * uniform_unit(rng) - 1.0;
  CHECK(upsample2(x).dot(y) == doctest::Approx(x.dot(upsample2_adjoint(y))).epsilon(1e-12));

  VectorX<double> g(n / 2);
  for (Index i = 0; i < n / 2; ++i) g[i] = 2.0 * uniform_unit(rng) - 1.0;
  CHECK(downsample2(x).dot(g) == doctest::Approx(x.dot(downsample2_adjoint(g))).epsilon(1e-12));
}

TEST_CASE("factor 4 is the two-stage cascade and bad factors are rejected") {
  std::mt19937_64 rng(37);
  VectorX<double> x(64);
  for (Index i = 0; i < 64; ++i) x[i] = 2.0 * uniform_unit(rng) - 1.0;
  VectorX<double> up4 = upsample_factor(x, 4);
  VectorX<double> up22 = upsample2(upsample2(x));
  REQUIRE(up4.size() == 256);
  for (Index i = 0; i < 256; ++i) CHECK(up4[i] == up22[i]);
  CHECK(upsample_factor(x, 1) == x);
  CHECK_THROWS_WITH(upsample_factor(x, 3), doctest::Contains("factor"));
  CHECK_THROWS_WITH(downsample_factor(x, 8), doctest::Contains("factor"));
}

TEST_CASE("downsample2 zero-pads odd-length input") {
  VectorX<double> x(5);
  x << 1, 2, 3, 4, 5;
  VectorX<double> d = downsample2(x);
  REQUIRE(d.size() == 3);
  VectorX<double> x6(6);
  x6 << 1, 2, 3, 4, 5, 0;
  VectorX<double> d6 = downsample2(x6);
  for (Index i = 0; i < 3; ++i) CHECK(d[i] == d6[i]);
}

TEST_CASE("tensor resampling works per row") {
  std::mt19937_64 rng(41);
  Tensor<double> x(2, 2, 32);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * uniform_unit(rng) - 1.0;
  Tensor<double> up = upsample_factor(x, 2);
  REQUIRE(up.time() == 64);
  for (Index b = 0; b < 2; ++b)
    for (Index c = 0; c < 2; ++c) {
      VectorX<double> row = x.row(b, c).transpose();
      VectorX<double> want = upsample2(row);
      for (Index t = 0; t < 64; ++t) CHECK(up(b, c, t) == want[t]);
    }
  CHECK_THROWS_WITH(downsample_factor(Tensor<double>(1, 1, 33), 2), doctest::Contains("divide"));
}

TEST_CASE("resampling a silent signal is silent") {
  VectorX<float> x = VectorX<float>::Zero(400);
  CHECK(upsample_factor(x, 4).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(downsample_factor(x, 4).cwiseAbs().maxCoeff() == 0.0f);
}
