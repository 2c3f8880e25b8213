#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "wden/augment.hpp"

using namespace wden;

namespace {

VectorX<float> tone(double freq_rel, Index t_n) {
  VectorX<float> x(t_n);
  for (Index t = 0; t < t_n; ++t) x[t] = float(std::sin(2.0 * M_PI * freq_rel * double(t)));
  return x;
}

// Gain of a filter output against the probe, measured away from the edges.
double gain_db(const VectorX<float>& in, const VectorX<float>& out) {
  const Index a = in.size() / 4, n = in.size() / 2;
  const double ri = double(in.segment(a, n).norm());
  const double ro = double(out.segment(a, n).norm());
  return 20.0 * std::log10((ro + 1e-12) / ri);
}

PairBatch<float> random_pair(Index batch, Index t_n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  PairBatch<float> p{Tensor<float>(batch, 1, t_n), Tensor<float>(batch, 1, t_n)};
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t < t_n; ++t) {
      p.clean(b, 0, t) = d(rng);
      p.noise(b, 0, t) = d(rng);
    }
  return p;
}

}  // namespace

TEST_CASE("mel scale closed form and inverse") {
  CHECK(mel_hz(1000.0) == doctest::Approx(2595.0 * std::log10(1.0 + 1000.0 / 700.0)));
  CHECK(mel_hz(1000.0) == doctest::Approx(1000.0).epsilon(0.001));
  for (double f : {10.0, 440.0, 1000.0, 4000.0, 7999.0})
    CHECK(mel_to_hz(mel_hz(f)) == doctest::Approx(f).epsilon(1e-9));
}

TEST_CASE("lowpass keeps the passband and kills the stopband") {
  const Index t_n = 8000;
  const VectorX<float> low = tone(0.02, t_n), high = tone(0.2, t_n);
  CHECK(gain_db(low, lowpass(low, 0.1)) == doctest::Approx(0.0).epsilon(0.15));
  CHECK(gain_db(high, lowpass(high, 0.1)) < -20.0);
  // degenerate cutoffs
  CHECK(lowpass(low, 0.5).isApprox(low));
  CHECK(lowpass(low, 0.0).norm() == 0.0f);
}

TEST_CASE("bandstop response: stopband >= 20 dB down, passband within 1 dB") {
  const Index t_n = 8000;
  const double f0 = 1000.0 / 16000.0, f1 = 2500.0 / 16000.0;
  const VectorX<float> pass_lo = tone(500.0 / 16000.0, t_n);
  const VectorX<float> stop = tone(1600.0 / 16000.0, t_n);
  const VectorX<float> pass_hi = tone(3500.0 / 16000.0, t_n);
  CHECK(std::abs(gain_db(pass_lo, bandstop(pass_lo, f0, f1))) < 1.0);
  CHECK(gain_db(stop, bandstop(stop, f0, f1)) < -20.0);
  CHECK(std::abs(gain_db(pass_hi, bandstop(pass_hi, f0, f1))) < 1.0);
}

TEST_CASE("degenerate band is the identity") {
  const VectorX<float> x = tone(0.07, 4000);
  const VectorX<float> y = bandstop(x, 0.1, 0.1);
  CHECK((y - x).template lpNorm<Eigen::Infinity>() == 0.0f);
}

TEST_CASE("sampled mel bands cover exactly the requested mel fraction") {
  std::mt19937_64 rng(11);
  const double m_top = mel_hz(8000.0);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 500; ++i) {
    const MelBand b = sample_mel_band(0.2, rng);
    const double w = (mel_hz(b.f1 * 16000.0) - mel_hz(b.f0 * 16000.0)) / m_top;
    CHECK(w == doctest::Approx(0.2).epsilon(0.01));
    lo = std::min(lo, b.f0);
    hi = std::max(hi, b.f1);
  }
  CHECK(lo < 0.01);   // bands reach near the bottom of the axis
  CHECK(hi > 0.45);   // and near Nyquist
}

TEST_CASE("bandmask attenuates a probe inside its own band") {
  const Index t_n = 8000;
  std::mt19937_64 rng(5);
  const MelBand band = sample_mel_band(0.2, rng);
  const double mid = std::sqrt(band.f0 * band.f1);  // geometric center of the stop band
  PairBatch<float> p{Tensor<float>(1, 1, t_n), Tensor<float>(1, 1, t_n)};
  p.clean.row(0, 0) = tone(mid, t_n).transpose();
  std::mt19937_64 rng2(5);  // same draw -> same band inside bandmask
  PairBatch<float> out = bandmask(p, 0.2, rng2);
  const VectorX<float> in_row = p.clean.row(0, 0).transpose();
  const VectorX<float> out_row = out.clean.row(0, 0).transpose();
  CHECK(gain_db(in_row, out_row) < -20.0);
  CHECK(out.noise.raw().norm() == 0.0f);  // silent noise stays silent
}

TEST_CASE("shift trims and moves both signals together") {
  const Index t_n = 600, max_shift = 100;
  PairBatch<float> p{Tensor<float>(2, 1, t_n), Tensor<float>(2, 1, t_n)};
  p.clean(0, 0, 300) = 1.0f;
  p.noise(0, 0, 300) = 0.5f;
  p.clean(1, 0, 450) = 1.0f;
  p.noise(1, 0, 450) = 0.5f;

  std::mt19937_64 rng(3);
  std::mt19937_64 probe(3);
  const Index k0 = std::min<Index>(max_shift, Index(uniform_unit(probe) * double(max_shift + 1)));
  const Index k1 = std::min<Index>(max_shift, Index(uniform_unit(probe) * double(max_shift + 1)));
  PairBatch<float> out = shift(p, max_shift, rng);
  CHECK(out.clean.time() == t_n - max_shift);
  CHECK(out.clean(0, 0, 300 - k0) == 1.0f);
  CHECK(out.noise(0, 0, 300 - k0) == 0.5f);  // alignment preserved
  CHECK(out.clean(1, 0, 450 - k1) == 1.0f);
  CHECK(out.clean.row(0, 0).sum() == 1.0f);  // nothing else moved in

  std::mt19937_64 rng2(9);
  PairBatch<float> same = shift(p, 0, rng2);
  CHECK(same.clean.raw() == p.clean.raw());
  CHECK(same.noise.raw() == p.noise.raw());
  CHECK_THROWS_AS((void)shift(p, t_n, rng2), std::invalid_argument);
}

TEST_CASE("remix permutes the noises and leaves clean untouched") {
  PairBatch<float> p = random_pair(6, 50, 21);
  std::mt19937_64 rng(4);
  PairBatch<float> out = remix(p, rng);
  CHECK(out.clean.raw() == p.clean.raw());

  std::vector<std::vector<float>> before, after;
  for (Index b = 0; b < 6; ++b) {
    before.emplace_back(p.noise.row(b, 0).begin(), p.noise.row(b, 0).end());
    after.emplace_back(out.noise.row(b, 0).begin(), out.noise.row(b, 0).end());
  }
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  CHECK(before == after);
  CHECK(out.noise.raw().sum() == doctest::Approx(p.noise.raw().sum()));

  PairBatch<float> single = random_pair(1, 50, 22);
  std::mt19937_64 rng2(4);
  PairBatch<float> same = remix(single, rng2);
  CHECK(same.noise.raw() == single.noise.raw());
}

TEST_CASE("revecho parameter law") {
  RevechoParams rp;
  rp.tau_s = 0.030;
  rp.rt60_s = 0.3;
  CHECK(rp.echoes() == 10);
  CHECK(rp.rho() == doctest::Approx(std::pow(1e-3, 0.1)).epsilon(1e-12));
  CHECK(std::pow(rp.rho(), double(rp.echoes())) == doctest::Approx(1e-3).epsilon(1e-9));

  std::mt19937_64 rng(77);
  for (int i = 0; i < 200; ++i) {
    RevechoParams r;
    r.lambda = 0.3 * uniform_unit(rng);
    r.tau_s = 0.010 + 0.020 * uniform_unit(rng);
    r.rt60_s = 0.3 + 1.0 * uniform_unit(rng);
    CHECK(std::pow(r.rho(), double(r.echoes())) <= 1e-3 + 1e-12);
  }
}

TEST_CASE("echo train of an impulse is the closed-form geometric comb") {
  const Index t_n = 4000;
  VectorX<float> x = VectorX<float>::Zero(t_n);
  x[0] = 1.0f;
  RevechoParams rp;
  rp.lambda = 0.2;
  rp.tau_s = 0.030;
  rp.rt60_s = 0.3;
  const Index d = Index(std::llround(rp.tau_s * 16000.0));
  std::vector<Index> delays;
  for (Index n = 1; n <= rp.echoes(); ++n) delays.push_back(n * d);

  const VectorX<float> e = echo_train(x, rp.lambda, rp.rho(), delays);
  double expect = rp.lambda;
  for (Index n = 1; n <= rp.echoes(); ++n) {
    expect *= rp.rho();
    if (n * d < t_n) CHECK(e[n * d] == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(e[0] == 0.0f);
  CHECK(e[d + 1] == 0.0f);

  CHECK(echo_train(x, 0.0, rp.rho(), delays).norm() == 0.0f);  // lambda = 0 is silent
}

TEST_CASE("revecho policy routes the clean echoes") {
  PairBatch<float> p{Tensor<float>(1, 1, 3000), Tensor<float>(1, 1, 3000)};
  p.clean(0, 0, 10) = 1.0f;  // impulse clean, silent noise

  RevechoOptions keep;
  keep.keep_reverb = true;
  keep.jitter = 0.0;
  RevechoOptions remove;
  remove.keep_reverb = false;
  remove.jitter = 0.0;

  std::mt19937_64 r1(13), r2(13);
  PairBatch<float> a = revecho(p, 1.0, r1, keep);
  PairBatch<float> b = revecho(p, 1.0, r2, remove);

  // same draw, different routing: echoes land on clean in one and noise in the other
  CHECK(a.noise.raw().norm() == 0.0f);
  CHECK(b.clean.raw() == p.clean.raw());
  const RowMajorX<float> echo_a = a.clean.raw() - p.clean.raw();
  CHECK(echo_a == b.noise.raw());
  CHECK(echo_a.norm() > 0.0f);

  std::mt19937_64 r3(13);
  PairBatch<float> never = revecho(p, 0.0, r3, keep);
  CHECK(never.clean.raw() == p.clean.raw());
  CHECK(never.noise.raw() == p.noise.raw());
}

TEST_CASE("seeded augmentations are deterministic") {
  PairBatch<float> p = random_pair(4, 2000, 31);
  auto run = [&](uint64_t seed) {
    std::mt19937_64 rng(seed);
    PairBatch<float> out = shift(p, 64, rng);
    out = remix(out, rng);
    out = bandmask(out, 0.2, rng);
    out = revecho(out, 0.5, rng);
    return out;
  };
  PairBatch<float> a = run(123), b = run(123), c = run(124);
  CHECK(a.clean.raw() == b.clean.raw());
  CHECK(a.noise.raw() == b.noise.raw());
  CHECK(a.noise.raw() != c.noise.raw());
}

TEST_CASE("mixture is clean plus noise") {
  PairBatch<float> p = random_pair(2, 100, 41);
  Tensor<float> x = mixture(p);
  const RowMajorX<float> want = p.clean.raw() + p.noise.raw();
  CHECK(x.raw() == want);
  PairBatch<float> bad{Tensor<float>(1, 1, 10), Tensor<float>(1, 1, 11)};
  CHECK_THROWS_AS((void)mixture(bad), std::invalid_argument);
}
