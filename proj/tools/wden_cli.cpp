#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wden/augment.hpp"
#include "wden/model.hpp"
#include "wden/objective.hpp"
#include "wden/stream.hpp"
#include "wden/train.hpp"
#include "wden/wav.hpp"
#include "wden/weights.hpp"

using namespace wden;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 usage, 3 data, 4 numeric/divergence.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ModelConfig parse_config(const std::string& s) {
  std::vector<long long> f;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      f.push_back(std::stoll(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (...) {
      throw UsageError("config: bad field '" + tok + "'");
    }
  }
  if (f.size() != 6) throw UsageError("config: expected 6 fields L,H,K,S,U,causal");
  ModelConfig cfg;
  cfg.depth = Index(f[0]);
  cfg.hidden = Index(f[1]);
  cfg.kernel = Index(f[2]);
  cfg.stride = Index(f[3]);
  cfg.resample = Index(f[4]);
  cfg.causal = f[5] != 0;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

// A weight file wins over --config; without either the reference config with
// seeded random weights stands in, so benchmarks and checks run self-contained.
LoadedModel resolve_model(const std::string& model_path, const std::string& config_str,
                          uint64_t seed) {
  if (!model_path.empty()) {
    if (!config_str.empty()) throw UsageError("pass either --model or --config, not both");
    return load_weights(model_path);
  }
  ModelConfig cfg = config_str.empty() ? ModelConfig{} : parse_config(config_str);
  return {cfg, init_params<float>(cfg, seed)};
}

WavData read_input(const std::string& path, Index want_rate, bool force) {
  WavData w = read_wav(path);
  if (w.samples.empty()) throw std::runtime_error("wav: " + path + ": no samples");
  if (want_rate > 0 && Index(w.sample_rate) != want_rate) {
    std::cerr << "warning: " << path << " is " << w.sample_rate << " Hz but the model expects "
              << want_rate << " Hz\n";
    if (!force)
      throw std::runtime_error("wav: " + path + ": sample rate mismatch (--force runs anyway)");
  }
  return w;
}

void emit(const json& j, const std::string& mode) {
  if (mode == "json") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (const auto& [k, v] : j.items()) {
    if (k == "v") continue;
    std::cout << k << ": ";
    if (v.is_string()) {
      std::cout << v.get<std::string>();
    } else if (v.is_array()) {
      for (size_t i = 0; i < v.size(); ++i) std::cout << (i ? " " : "") << v[i].dump();
    } else {
      std::cout << v.dump();
    }
    std::cout << "\n";
  }
}

json config_json(const ModelConfig& cfg) {
  return {{"depth", cfg.depth},       {"hidden", cfg.hidden},     {"kernel", cfg.kernel},
          {"stride", cfg.stride},     {"resample", cfg.resample}, {"causal", cfg.causal},
          {"sample_rate", cfg.sample_rate}};
}

// Tone in noise at an arbitrary rate; deterministic bench and toy input.
std::vector<float> bench_signal(Index n, uint64_t seed, double rate) {
  std::mt19937_64 rng(seed);
  std::vector<float> x(static_cast<size_t>(n));
  for (Index t = 0; t < n; ++t) {
    const double tone = 0.08 * std::sin(2.0 * M_PI * 563.0 * double(t) / rate);
    x[size_t(t)] = float(tone + 0.05 * (2.0 * uniform_unit(rng) - 1.0));
  }
  return x;
}

VectorX<float> as_vector(const std::vector<float>& x) {
  return Eigen::Map<const VectorX<float>>(x.data(), Index(x.size()));
}

double ms_between(std::chrono::steady_clock::time_point a,
                  std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

struct Opts {
  std::string in, in2, out, out2, model, config, report = "text";
  double dry = 0.0, beta = 0.5, chunk_ms = 16.0, seconds = 10.0;
  double bandmask = 0.0, revecho = 0.0, h = 1e-5, tol = 1e-3, lr = 3e-4;
  std::int64_t seed = 0, steps = 500, samples = 0, shift = 0, probes = 8;
  bool force = false, single_core = false, zero = false, keep_reverb = false, two_sources = false;
};

int run_enhance(const Opts& o) {
  LoadedModel m = resolve_model(o.model, o.config, uint64_t(o.seed));
  WavData w = read_input(o.in, m.config.sample_rate, o.force);
  const Index n = Index(w.samples.size());

  Tensor<float> x(1, 1, n);
  x.row(0, 0) = as_vector(w.samples).transpose();
  Tensor<float> y = forward(m.params, m.config, x);

  const float dry = float(o.dry);
  std::vector<float> out(w.samples.size());
  for (Index t = 0; t < n; ++t) {
    out[size_t(t)] = dry * w.samples[size_t(t)] + (1.0f - dry) * y.row(0, 0)[t];
    if (!std::isfinite(out[size_t(t)])) throw NumericError("enhance: output is not finite");
  }
  write_wav(o.out, out, w.sample_rate);

  emit({{"v", 1},
        {"command", "enhance"},
        {"samples", n},
        {"sample_rate", w.sample_rate},
        {"dry", o.dry},
        {"out", o.out}},
       o.report);
  return 0;
}

int run_stream_simulate(const Opts& o) {
  using clock = std::chrono::steady_clock;
  LoadedModel m = resolve_model(o.model, o.config, uint64_t(o.seed));
  WavData w = read_input(o.in, m.config.sample_rate, o.force);
  const Index n = Index(w.samples.size());
  const Index chunk =
      std::max<Index>(1, Index(std::llround(o.chunk_ms * double(w.sample_rate) / 1000.0)));

  Streamer<float> st(m.params, m.config, o.dry);
  std::vector<float> out;
  out.reserve(w.samples.size());
  std::vector<double> push_ms;
  const auto t_all = clock::now();
  Index off = 0;
  while (off < n) {
    const Index take = std::min(chunk, n - off);
    const auto t0 = clock::now();
    std::vector<float> part = st.push(w.samples.data() + off, take);
    push_ms.push_back(ms_between(t0, clock::now()));
    out.insert(out.end(), part.begin(), part.end());
    off += take;
  }
  std::vector<float> tail = st.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  const double total_ms = ms_between(t_all, clock::now());
  require(Index(out.size()) == n, "stream-simulate: output length mismatch");
  for (float v : out)
    if (!std::isfinite(v)) throw NumericError("stream-simulate: output is not finite");
  write_wav(o.out, out, w.sample_rate);

  double mean = 0;
  for (double v : push_ms) mean += v;
  mean /= double(push_ms.size());
  std::vector<double> sorted = push_ms;
  std::sort(sorted.begin(), sorted.end());
  const size_t at = size_t(std::ceil(0.95 * double(sorted.size()))) - 1;
  const double audio_ms = 1000.0 * double(n) / double(w.sample_rate);

  emit({{"v", 1},
        {"command", "stream-simulate"},
        {"samples", n},
        {"chunk_samples", chunk},
        {"chunks", push_ms.size()},
        {"stride_ms", st.stride_ms()},
        {"frame_ms", st.frame_ms()},
        {"lookahead_ms", st.lookahead_ms()},
        {"mean_push_ms", mean},
        {"p95_push_ms", sorted[std::min(at, sorted.size() - 1)]},
        {"total_ms", total_ms},
        {"audio_ms", audio_ms},
        {"rtf", total_ms / audio_ms},
        {"out", o.out}},
       o.report);
  return 0;
}

int run_bench(const Opts& o) {
  LoadedModel m = resolve_model(o.model, o.config, uint64_t(o.seed));
  const Index n = Index(o.seconds * double(m.config.sample_rate));
  const std::vector<float> input =
      bench_signal(n, uint64_t(o.seed), double(m.config.sample_rate));

  Streamer<float> st(m.params, m.config, 0.0);
  BenchOptions bo;
  bo.pin = o.single_core;
  StreamReport r = bench(st, input, bo);

  emit({{"v", 1},
        {"command", "bench"},
        {"frame_ms", r.frame_ms},
        {"stride_ms", r.stride_ms},
        {"lookahead_ms", r.lookahead_ms},
        {"frames", r.frames},
        {"mean_ms", r.mean_ms},
        {"p95_ms", r.p95_ms},
        {"rtf", r.rtf},
        {"affinity", r.pinned ? "pinned" : "unpinned"}},
       o.report);
  return 0;
}

int run_loss(const Opts& o) {
  WavData a = read_wav(o.in);
  WavData b = read_wav(o.in2);
  if (a.sample_rate != b.sample_rate)
    throw std::runtime_error("loss: sample rates differ (" + std::to_string(a.sample_rate) +
                             " vs " + std::to_string(b.sample_rate) + ")");
  if (a.samples.size() != b.samples.size())
    throw std::runtime_error("loss: lengths differ (" + std::to_string(a.samples.size()) +
                             " vs " + std::to_string(b.samples.size()) + ")");

  LossReport r = total_loss(as_vector(a.samples), as_vector(b.samples), o.beta);
  if (!std::isfinite(r.total)) throw NumericError("loss: total is not finite");
  emit({{"v", 1},
        {"command", "loss"},
        {"l1", r.l1},
        {"sc", r.sc},
        {"mag", r.mag},
        {"beta", r.beta},
        {"total", r.total}},
       o.report);
  return 0;
}

int run_augment(const Opts& o) {
  WavData c = read_wav(o.in);
  WavData nz = read_wav(o.in2);
  if (c.sample_rate != nz.sample_rate) throw std::runtime_error("augment: sample rates differ");
  if (c.samples.size() != nz.samples.size()) throw std::runtime_error("augment: lengths differ");
  const Index n = Index(c.samples.size());

  PairBatch<float> p{Tensor<float>(1, 1, n), Tensor<float>(1, 1, n)};
  p.clean.row(0, 0) = as_vector(c.samples).transpose();
  p.noise.row(0, 0) = (as_vector(nz.samples) - as_vector(c.samples)).transpose();

  std::mt19937_64 rng(uint64_t(o.seed));
  if (o.shift > 0) p = shift(p, Index(o.shift), rng);
  if (o.revecho > 0) {
    RevechoOptions ro;
    ro.keep_reverb = o.keep_reverb;
    ro.two_sources = o.two_sources;
    p = revecho(p, o.revecho, rng, ro, c.sample_rate);
  }
  if (o.bandmask > 0) p = bandmask(p, o.bandmask, rng, c.sample_rate);

  const Index t_out = p.clean.time();
  std::vector<float> out_clean(static_cast<size_t>(t_out));
  std::vector<float> out_noisy(static_cast<size_t>(t_out));
  const Tensor<float> mix = mixture(p);
  for (Index t = 0; t < t_out; ++t) {
    out_clean[size_t(t)] = p.clean.row(0, 0)[t];
    out_noisy[size_t(t)] = mix.row(0, 0)[t];
  }
  write_wav(o.out, out_clean, c.sample_rate);
  write_wav(o.out2, out_noisy, c.sample_rate);

  emit({{"v", 1},
        {"command", "augment"},
        {"samples", t_out},
        {"shift", o.shift},
        {"revecho", o.revecho},
        {"bandmask", o.bandmask},
        {"seed", o.seed},
        {"out_clean", o.out},
        {"out_noisy", o.out2}},
       o.report);
  return 0;
}

int run_grad_check(const Opts& o) {
  ModelConfig cfg = o.config.empty() ? parse_config("2,4,8,4,1,1") : parse_config(o.config);
  const Index t_n = o.samples > 0 ? Index(o.samples) : 1400;

  ModelParams<double> p = init_params<double>(cfg, uint64_t(o.seed));
  // Biases start at zero, which parks the zero-padded tail exactly on the
  // ReLU kink where two-sided differences disagree with the subgradient;
  // offset them so the probe measures the smooth chain.
  for (auto& e : p.enc)
    for (Index j = 0; j < e.conv_b.size(); ++j)
      e.conv_b[j] = (j % 2 ? 0.03 : -0.04) + double(j) * 1e-3;

  auto probe = [&](uint64_t seed, double f1, double f2, double scale) {
    std::mt19937_64 rng(seed);
    VectorX<double> x(t_n);
    for (Index t = 0; t < t_n; ++t)
      x[t] = scale * (0.5 * std::sin(2.0 * M_PI * f1 * double(t)) +
                      0.3 * std::sin(2.0 * M_PI * f2 * double(t) + 0.7) +
                      0.05 * (2.0 * uniform_unit(rng) - 1.0));
    return x;
  };
  const VectorX<double> clean = probe(3, 0.021, 0.059, 1.0);
  const VectorX<double> noise = probe(4, 0.142, 0.077, 0.4);
  Tensor<double> noisy_t(1, 1, t_n), clean_t(1, 1, t_n);
  noisy_t.row(0, 0) = (clean + noise).transpose();
  clean_t.row(0, 0) = clean.transpose();

  GradReport rep = grad_check(p, cfg, noisy_t, clean_t, o.beta, default_resolutions(), o.h,
                              Index(o.probes), o.tol);

  double worst = 0;
  json tensors = json::array();
  for (const auto& e : rep.tensors) {
    tensors.push_back({{"name", e.name}, {"rel", e.rel}});
    worst = std::max(worst, e.rel);
  }
  if (o.report == "json") {
    emit({{"v", 1},
          {"command", "grad-check"},
          {"config", config_json(cfg)},
          {"samples", t_n},
          {"beta", o.beta},
          {"h", o.h},
          {"probes", o.probes},
          {"tol", rep.tol},
          {"worst", worst},
          {"pass", rep.pass},
          {"tensors", tensors}},
         o.report);
  } else {
    for (const auto& e : rep.tensors) std::printf("%-16s %.3e\n", e.name.c_str(), e.rel);
    std::printf("worst %.3e  tol %.0e  %s\n", worst, rep.tol, rep.pass ? "pass" : "FAIL");
  }
  return rep.pass ? 0 : 4;
}

int run_train_toy(const Opts& o) {
  ModelConfig cfg = o.config.empty() ? parse_config("5,32,8,4,4,1") : parse_config(o.config);
  const Index t_n = o.samples > 0 ? Index(o.samples) : 4000;

  // Identity denoising: tones in mild noise as the target, zero noise source,
  // so descent measures how fast the model learns to pass its input through.
  VectorX<float> clean(t_n);
  std::mt19937 srng(100);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (Index t = 0; t < t_n; ++t)
    clean[t] = float(0.4 * std::sin(2.0 * M_PI * 0.02 * double(t)) +
                     0.2 * std::sin(2.0 * M_PI * 0.057 * double(t) + 1.0) + 0.05 * d(srng));
  const VectorX<float> noise = VectorX<float>::Zero(t_n);

  ModelParams<float> params = init_params<float>(cfg, uint64_t(1000 + o.seed));
  OverfitOptions opt;
  opt.seed = uint64_t(o.seed);
  opt.beta = o.beta;
  opt.adam.lr = o.lr;

  std::vector<double> curve;
  try {
    curve = overfit(params, cfg, clean, noise, Index(o.steps), opt);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).find("diverged") != std::string::npos) throw NumericError(e.what());
    throw;
  }

  if (!o.out.empty()) {
    std::ofstream csv(o.out);
    if (!csv) throw std::runtime_error("train-toy: cannot open " + o.out);
    csv << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) csv << i << ',' << curve[i] << '\n';
  }
  if (!o.out2.empty()) save_weights(o.out2, cfg, params);

  json j{{"v", 1},
         {"command", "train-toy"},
         {"config", config_json(cfg)},
         {"samples", t_n},
         {"steps", o.steps},
         {"seed", o.seed},
         {"lr", o.lr},
         {"initial", curve.front()},
         {"final", curve.back()},
         {"ratio", curve.back() / curve.front()}};
  if (!o.out.empty()) j["curve"] = o.out;
  if (!o.out2.empty()) j["weights"] = o.out2;
  emit(j, o.report);
  return 0;
}

int run_init_weights(const Opts& o) {
  ModelConfig cfg = o.config.empty() ? ModelConfig{} : parse_config(o.config);
  ModelParams<float> p =
      o.zero ? zero_params<float>(cfg) : init_params<float>(cfg, uint64_t(o.seed));
  save_weights(o.out, cfg, p);
  emit({{"v", 1},
        {"command", "init-weights"},
        {"config", config_json(cfg)},
        {"params", param_count(p)},
        {"zero", o.zero},
        {"seed", o.seed},
        {"out", o.out}},
       o.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Opts o;
  CLI::App app{"real-time waveform-domain speech enhancement"};
  app.require_subcommand(1);

  const auto add_report = [&](CLI::App* c) {
    c->add_option("--report", o.report, "report format")
        ->check(CLI::IsMember({"json", "text"}));
    c->add_option("--seed", o.seed, "RNG seed");
  };
  const auto add_model = [&](CLI::App* c, bool required) {
    auto* mo = c->add_option("--model", o.model, "weight file");
    c->add_option("--config", o.config, "L,H,K,S,U,causal (seeded random weights)");
    if (required) mo->required();
  };

  CLI::App* enh = app.add_subcommand("enhance", "denoise a recording offline");
  enh->add_option("input", o.in, "noisy wav")->required();
  enh->add_option("output", o.out, "enhanced wav")->required();
  add_model(enh, false);
  enh->add_option("--dry", o.dry, "dry/wet mix, 1 = passthrough")->check(CLI::Range(0.0, 1.0));
  enh->add_flag("--force", o.force, "run despite a sample rate mismatch");
  add_report(enh);

  CLI::App* sim = app.add_subcommand("stream-simulate", "denoise in fixed chunks");
  sim->add_option("input", o.in, "noisy wav")->required();
  sim->add_option("output", o.out, "enhanced wav")->required();
  add_model(sim, false);
  sim->add_option("--chunk-ms", o.chunk_ms, "chunk duration")->check(CLI::PositiveNumber);
  sim->add_option("--dry", o.dry, "dry/wet mix")->check(CLI::Range(0.0, 1.0));
  sim->add_flag("--force", o.force, "run despite a sample rate mismatch");
  add_report(sim);

  CLI::App* ben = app.add_subcommand("bench", "time the streaming engine");
  add_model(ben, false);
  ben->add_option("--seconds", o.seconds, "synthetic input length")->check(CLI::PositiveNumber);
  ben->add_flag("--single-core", o.single_core, "pin the worker to one core");
  add_report(ben);

  CLI::App* los = app.add_subcommand("loss", "score an enhancement against its target");
  los->add_option("clean", o.in, "reference wav")->required();
  los->add_option("enhanced", o.in2, "wav to score")->required();
  los->add_option("--beta", o.beta, "spectral term weight")->check(CLI::NonNegativeNumber);
  add_report(los);

  CLI::App* aug = app.add_subcommand("augment", "perturb a clean/noisy pair");
  aug->add_option("clean", o.in, "clean wav")->required();
  aug->add_option("noisy", o.in2, "noisy wav")->required();
  aug->add_option("--out-clean", o.out, "augmented clean wav")->required();
  aug->add_option("--out-noisy", o.out2, "augmented noisy wav")->required();
  aug->add_option("--shift", o.shift, "max random shift, samples")->check(CLI::NonNegativeNumber);
  aug->add_option("--revecho", o.revecho, "echo probability")->check(CLI::Range(0.0, 1.0));
  aug->add_flag("--keep-reverb", o.keep_reverb, "clean echoes stay in the target");
  aug->add_flag("--two-sources", o.two_sources, "jitter clean and noise echoes independently");
  aug->add_option("--bandmask", o.bandmask, "mel band width to remove, fraction")
      ->check(CLI::Range(0.0, 0.999));
  add_report(aug);

  CLI::App* grc = app.add_subcommand("grad-check", "finite-difference gradient audit");
  grc->add_option("--config", o.config, "L,H,K,S,U,causal");
  grc->add_option("--samples", o.samples, "signal length")->check(CLI::NonNegativeNumber);
  grc->add_option("--beta", o.beta, "spectral term weight")->check(CLI::NonNegativeNumber);
  grc->add_option("--fd-step", o.h, "difference step")->check(CLI::PositiveNumber);
  grc->add_option("--probes", o.probes, "probes per tensor")->check(CLI::PositiveNumber);
  grc->add_option("--tol", o.tol, "max relative error")->check(CLI::PositiveNumber);
  add_report(grc);

  CLI::App* toy = app.add_subcommand("train-toy", "overfit one synthetic pair");
  toy->add_option("--config", o.config, "L,H,K,S,U,causal");
  toy->add_option("--steps", o.steps, "optimizer steps")->check(CLI::NonNegativeNumber);
  toy->add_option("--samples", o.samples, "signal length")->check(CLI::NonNegativeNumber);
  toy->add_option("--beta", o.beta, "spectral term weight")->check(CLI::NonNegativeNumber);
  toy->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  toy->add_option("--out", o.out, "loss curve csv");
  toy->add_option("--save", o.out2, "trained weight file");
  add_report(toy);

  CLI::App* ini = app.add_subcommand("init-weights", "write a fresh weight file");
  ini->add_option("--out", o.out, "weight file")->required();
  ini->add_option("--config", o.config, "L,H,K,S,U,causal");
  ini->add_flag("--zero", o.zero, "all-zero weights instead of random");
  add_report(ini);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  // Seeds whose default landscapes are known-good for the verification tools.
  if (app.got_subcommand(grc) && grc->count("--seed") == 0) o.seed = 42;
  if (app.got_subcommand(toy) && toy->count("--seed") == 0) o.seed = 1;

  try {
    if (app.got_subcommand(enh)) return run_enhance(o);
    if (app.got_subcommand(sim)) return run_stream_simulate(o);
    if (app.got_subcommand(ben)) return run_bench(o);
    if (app.got_subcommand(los)) return run_loss(o);
    if (app.got_subcommand(aug)) return run_augment(o);
    if (app.got_subcommand(grc)) return run_grad_check(o);
    if (app.got_subcommand(toy)) return run_train_toy(o);
    if (app.got_subcommand(ini)) return run_init_weights(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
