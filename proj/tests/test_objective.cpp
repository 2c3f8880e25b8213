#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "wden/model.hpp"
#include "wden/objective.hpp"

using namespace wden;

namespace {

VectorX<double> noise(Index n, uint64_t seed, double amp = 1.0) {
  std::mt19937_64 rng(seed);
  VectorX<double> x(n);
  for (Index i = 0; i < n; ++i) x[i] = amp * (2.0 * uniform_unit(rng) - 1.0);
  return x;
}

// Independent spectrogram: its own reflect padding, its own quadratic DFT.
MatrixX<double> stft_oracle(const VectorX<double>& x, const StftConfig& cfg) {
  const Index n = x.size(), pad = cfg.n_fft / 2;
  std::vector<double> padded;
  for (Index j = -pad; j < n + pad; ++j) {
    Index s = j;
    if (s < 0) s = -s;
    if (s >= n) s = 2 * n - 2 - s;
    padded.push_back(x[s]);
  }
  std::vector<double> win(size_t(cfg.n_fft), 0.0);
  const Index off = (cfg.n_fft - cfg.win_length) / 2;
  for (Index t = 0; t < cfg.win_length; ++t)
    win[size_t(off + t)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(t) / double(cfg.win_length)));

  const Index frames = n / cfg.hop + 1, bins = cfg.n_fft / 2 + 1;
  MatrixX<double> mag(frames, bins);
  for (Index f = 0; f < frames; ++f)
    for (Index k = 0; k < bins; ++k) {
      std::complex<double> acc(0, 0);
      for (Index t = 0; t < cfg.n_fft; ++t) {
        const double ang = -2.0 * M_PI * double(k) * double(t) / double(cfg.n_fft);
        acc += win[size_t(t)] * padded[size_t(f * cfg.hop + t)] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      mag(f, k) = std::abs(acc);
    }
  return mag;
}

}  // namespace

TEST_CASE("radix-2 transform agrees with the naive DFT and inverts exactly") {
  std::mt19937_64 rng(3);
  std::vector<Complex> a(64);
  for (auto& v : a) v = Complex(2.0 * uniform_unit(rng) - 1.0, 2.0 * uniform_unit(rng) - 1.0);
  std::vector<Complex> naive = dft_naive(a, false);
  std::vector<Complex> fast = a;
  dft(fast, false);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(fast[i] - naive[i]) < 1e-10);
  dft(fast, true);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(fast[i] / 64.0 - a[i]) < 1e-12);
}

TEST_CASE("stft magnitudes match an independent quadratic oracle") {
  const StftConfig cfg{64, 16, 32};
  const VectorX<double> x = noise(200, 5);
  MatrixX<double> got = stft_mag(x, cfg);
  MatrixX<double> want = stft_oracle(x, cfg);
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == 33);
  for (Index f = 0; f < got.rows(); ++f)
    for (Index k = 0; k < got.cols(); ++k) CHECK(got(f, k) == doctest::Approx(want(f, k)).epsilon(1e-9));
}

TEST_CASE("DC input concentrates in bin zero with window-sum magnitude") {
  const StftConfig cfg{512, 50, 240};
  VectorX<double> x = VectorX<double>::Constant(600, 1.0);
  MatrixX<double> m = stft_mag(x, cfg);
  const double wsum = 0.5 * double(cfg.win_length);  // periodic Hann sums to half its length
  for (Index f = 0; f < m.rows(); ++f) {
    CHECK(m(f, 0) == doctest::Approx(wsum).epsilon(1e-6));
    // the zero-padded window leaks into its mainlobe; beyond it bins are tiny
    for (Index k = 1; k < m.cols(); ++k) CHECK(m(f, k) < m(f, 0));
    for (Index k = 16; k < m.cols(); ++k) CHECK(m(f, k) < 1e-3 * wsum);
  }
}

TEST_CASE("zero signal gives all-zero magnitudes; energy obeys Parseval") {
  const StftConfig cfg{256, 64, 128};
  VectorX<double> z = VectorX<double>::Zero(400);
  CHECK(stft_mag(z, cfg).cwiseAbs().maxCoeff() == 0.0);

  const VectorX<double> x = noise(400, 7);
  const auto spec = detail::stft_complex(x, cfg);
  const std::vector<double> win = detail::padded_window(cfg);
  const Index pad = cfg.n_fft / 2;
  for (size_t f = 0; f < spec.size(); ++f) {
    double lhs = std::norm(spec[f][0]) + std::norm(spec[f].back());
    for (size_t k = 1; k + 1 < spec[f].size(); ++k) lhs += 2.0 * std::norm(spec[f][k]);
    double rhs = 0;
    for (Index t = 0; t < cfg.n_fft; ++t) {
      const double v = win[size_t(t)] * x[detail::reflect_index(Index(f) * cfg.hop + t - pad, x.size())];
      rhs += v * v;
    }
    CHECK(lhs == doctest::Approx(double(cfg.n_fft) * rhs).epsilon(1e-3));
  }
}

TEST_CASE("stft rejects signals shorter than the framing needs") {
  CHECK_THROWS_WITH((void)stft_mag(VectorX<double>(VectorX<double>::Zero(100)), StftConfig{512, 50, 240}),
                    doctest::Contains("too short"));
  CHECK_THROWS_WITH((void)stft_mag(VectorX<double>(VectorX<double>::Zero(250)), StftConfig{512, 50, 240}),
                    doctest::Contains("too short"));  // >= win_length but <= n_fft/2
}

TEST_CASE("spectral convergence has the scaling closed forms and asymmetry") {
  const StftConfig cfg{64, 16, 32};
  const VectorX<double> y = noise(300, 11);
  CHECK(loss_sc(y, y, cfg) == 0.0);
  CHECK(loss_sc(y, VectorX<double>(0.5 * y), cfg) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(loss_sc(y, VectorX<double>(2.0 * y), cfg) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(loss_sc(VectorX<double>(2.0 * y), y, cfg) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("silent reference: zero-vs-zero scores zero, otherwise rejected") {
  const StftConfig cfg{64, 16, 32};
  VectorX<double> z = VectorX<double>::Zero(300);
  CHECK(loss_sc(z, z, cfg) == 0.0);
  CHECK(loss_mag(z, z, cfg) == 0.0);
  VectorX<double> z_long = VectorX<double>::Zero(1400);  // long enough for all defaults
  CHECK(total_loss(z_long, z_long).total == 0.0);
  CHECK_THROWS_WITH((void)loss_sc(z, noise(300, 13), cfg), doctest::Contains("zero spectral energy"));
}

TEST_CASE("log-magnitude loss matches the scaling closed form") {
  const StftConfig cfg{64, 16, 32};
  const VectorX<double> y = noise(300, 17);
  const MatrixX<double> m = stft_mag(y, cfg);
  REQUIRE(m.minCoeff() > 10 * kMagFloor);  // closed form needs both sides off the floor
  CHECK(loss_mag(y, y, cfg) == 0.0);
  const double want = std::log(2.0) * double(m.rows() * m.cols()) / double(y.size());
  CHECK(loss_mag(y, VectorX<double>(2.0 * y), cfg) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("total loss composes its terms and honors beta") {
  const VectorX<double> y = noise(1400, 19);
  const VectorX<double> yh = y + 0.1 * noise(1400, 23);
  LossReport r = total_loss(y, yh);
  CHECK(r.beta == 0.5);
  REQUIRE(r.sc.size() == 3);
  REQUIRE(r.mag.size() == 3);
  double want = r.l1;
  for (size_t i = 0; i < 3; ++i) {
    CHECK(r.sc[i] >= 0.0);
    CHECK(r.mag[i] >= 0.0);
    want += r.beta * (r.sc[i] + r.mag[i]);
  }
  CHECK(r.total == doctest::Approx(want).epsilon(1e-12));
  CHECK(total_loss(y, y).total == 0.0);

  LossReport r0 = total_loss(y, yh, 0.0);
  double l1 = 0;
  for (Index t = 0; t < y.size(); ++t) l1 += std::abs(y[t] - yh[t]);
  CHECK(r0.total == doctest::Approx(l1 / double(y.size())).epsilon(1e-12));
}

TEST_CASE("default resolutions are the three published sets") {
  const auto res = default_resolutions();
  REQUIRE(res.size() == 3);
  CHECK(res[0].n_fft == 512);  CHECK(res[0].hop == 50);  CHECK(res[0].win_length == 240);
  CHECK(res[1].n_fft == 1024); CHECK(res[1].hop == 120); CHECK(res[1].win_length == 600);
  CHECK(res[2].n_fft == 2048); CHECK(res[2].hop == 240); CHECK(res[2].win_length == 1200);
}

TEST_CASE("loss gradient matches central finite differences") {
  const std::vector<StftConfig> res{{64, 16, 32}, {128, 32, 64}};
  const Index n = 180;
  const VectorX<double> y = noise(n, 29);
  VectorX<double> yh = y + 0.3 * noise(n, 31);
  const VectorX<double> grad = total_loss_backward(y, yh, 0.5, res);

  const double h = 1e-6;
  double max_rel = 0;
  for (Index t = 0; t < n; ++t) {
    VectorX<double> p = yh, q = yh;
    p[t] += h;
    q[t] -= h;
    const double fd = (total_loss(y, p, 0.5, res).total - total_loss(y, q, 0.5, res).total) / (2 * h);
    max_rel = std::max(max_rel, std::abs(grad[t] - fd) / (std::abs(fd) + 1e-9));
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("loss gradient at the default resolutions, spot-checked") {
  const Index n = 1400;
  const VectorX<double> y = noise(n, 37);
  VectorX<double> yh = y + 0.2 * noise(n, 41);
  const VectorX<double> grad = total_loss_backward(y, yh);
  const double h = 1e-6;
  for (Index t = 13; t < n; t += 97) {
    VectorX<double> p = yh, q = yh;
    p[t] += h;
    q[t] -= h;
    const double fd = (total_loss(y, p).total - total_loss(y, q).total) / (2 * h);
    CHECK(grad[t] == doctest::Approx(fd).epsilon(2e-4));
  }
}
