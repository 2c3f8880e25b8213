#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wden/augment.hpp"
#include "wden/grad.hpp"
#include "wden/model.hpp"

namespace wden {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <std::floating_point S>
struct AdamState {
  Index step = 0;
  ModelParams<S> m, v;

  static AdamState zero(const ModelConfig& cfg) {
    return {0, zero_params<S>(cfg), zero_params<S>(cfg)};
  }
};

// Standard bias-corrected Adam over the canonical parameter enumeration.
template <std::floating_point S>
void adam_step(ModelParams<S>& params, ModelParams<S>& grads, AdamState<S>& st,
               const AdamConfig& cfg = {}) {
  auto pv = param_views(params), gv = param_views(grads);
  auto mv = param_views(st.m), vv = param_views(st.v);
  require(pv.size() == gv.size(), "adam: gradient shape mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (size_t i = 0; i < pv.size(); ++i) {
    require(gv[i].size == pv[i].size && gv[i].name == pv[i].name, "adam: gradient shape mismatch");
    for (Index j = 0; j < pv[i].size; ++j) {
      const double g = double(gv[i].data[j]);
      const double m = cfg.beta1 * double(mv[i].data[j]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * double(vv[i].data[j]) + (1.0 - cfg.beta2) * g * g;
      mv[i].data[j] = S(m);
      vv[i].data[j] = S(v);
      pv[i].data[j] -= S(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
    }
  }
}

struct GradCheckEntry {
  std::string name;
  double rel;  // max |analytic - fd| over the probes, relative to the fd scale
};

struct GradReport {
  std::vector<GradCheckEntry> tensors;
  double tol = 1e-3;
  bool pass = false;
};

// Central finite differences against the analytic gradients, probing a fixed
// strided subset of every parameter tensor. Meant to run at 64-bit; callers
// pick data without exact L1 ties so the subgradient kink stays unexercised.
template <std::floating_point S>
GradReport grad_check(ModelParams<S>& params, const ModelConfig& cfg, const Tensor<S>& noisy,
                      const Tensor<S>& clean, double beta = 0.5,
                      const std::vector<StftConfig>& resolutions = default_resolutions(),
                      double h = 1e-5, Index probes_per_tensor = 16, double tol = 1e-3) {
  BackwardResult<S> res = backward(params, cfg, noisy, clean, beta, resolutions);
  auto pv = param_views(params), gv = param_views(res.grads);

  auto loss_at = [&]() {
    Tensor<S> y_hat = forward(params, cfg, noisy);
    double total = 0;
    for (Index b = 0; b < noisy.batch(); ++b)
      total += total_loss(VectorX<S>(clean.row(b, 0).transpose()),
                          VectorX<S>(y_hat.row(b, 0).transpose()), beta, resolutions)
                   .total /
               double(noisy.batch());
    return total;
  };

  GradReport report;
  report.tol = tol;
  report.pass = true;
  for (size_t i = 0; i < pv.size(); ++i) {
    const Index n = pv[i].size;
    const Index probes = std::min(probes_per_tensor, n);
    double max_diff = 0, max_fd = 0;
    for (Index p = 0; p < probes; ++p) {
      const Index idx = probes == 1 ? 0 : p * (n - 1) / (probes - 1);
      const S orig = pv[i].data[idx];
      pv[i].data[idx] = orig + S(h);
      const double lp = loss_at();
      pv[i].data[idx] = orig - S(h);
      const double lm = loss_at();
      pv[i].data[idx] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(double(gv[i].data[idx]) - fd));
      max_fd = std::max(max_fd, std::abs(fd));
    }
    const double rel = max_diff / (max_fd + 1e-12);
    report.tensors.push_back({pv[i].name, rel});
    if (!(rel < tol)) report.pass = false;
  }
  return report;
}

struct OverfitOptions {
  Index batch = 1;
  Index max_shift = -1;  // negative: min(T/8, 256)
  double beta = 0.5;
  uint64_t seed = 0;
  AdamConfig adam;
};

// Overfits one (clean, noise) pair: per step shift-augment, mix, loss,
// gradients, Adam. Returns the loss curve, initial loss first, so `steps`
// steps yield steps + 1 entries. Divergence past 10x the initial loss aborts.
template <std::floating_point S>
std::vector<double> overfit(ModelParams<S>& params, const ModelConfig& cfg,
                            const VectorX<S>& clean, const VectorX<S>& noise, Index steps,
                            const OverfitOptions& opt = {}) {
  require(clean.size() == noise.size(), "overfit: clean/noise length mismatch");
  require(clean.size() >= 1, "overfit: empty pair");
  require(steps >= 0, "overfit: steps must be >= 0");
  require(opt.batch >= 1, "overfit: batch must be >= 1");
  const Index t_n = clean.size();
  const Index max_shift = opt.max_shift >= 0 ? opt.max_shift : std::min<Index>(t_n / 8, 256);
  require(max_shift < t_n, "overfit: max_shift must be < T");

  PairBatch<S> base{Tensor<S>(opt.batch, 1, t_n), Tensor<S>(opt.batch, 1, t_n)};
  for (Index b = 0; b < opt.batch; ++b) {
    base.clean.row(b, 0) = clean.transpose();
    base.noise.row(b, 0) = noise.transpose();
  }

  std::mt19937_64 rng(opt.seed);
  std::vector<double> curve;
  {
    Tensor<S> x(1, 1, t_n), y(1, 1, t_n);
    x.row(0, 0) = (clean + noise).transpose();
    y.row(0, 0) = clean.transpose();
    Tensor<S> y_hat = forward(params, cfg, x);
    curve.push_back(total_loss(VectorX<S>(y.row(0, 0).transpose()),
                               VectorX<S>(y_hat.row(0, 0).transpose()), opt.beta)
                        .total);
  }
  require(std::isfinite(curve[0]), "overfit: initial loss is not finite");

  AdamState<S> st = AdamState<S>::zero(cfg);
  for (Index s = 0; s < steps; ++s) {
    PairBatch<S> batch = shift(base, max_shift, rng);
    BackwardResult<S> res = backward(params, cfg, mixture(batch), batch.clean, opt.beta);
    adam_step(params, res.grads, st, opt.adam);
    if (!std::isfinite(res.loss.total) || res.loss.total > 10.0 * curve[0])
      throw std::runtime_error("overfit: diverged at step " + std::to_string(s) + " (loss " +
                               std::to_string(res.loss.total) + ")");
    curve.push_back(res.loss.total);
  }
  return curve;
}

}  // namespace wden
