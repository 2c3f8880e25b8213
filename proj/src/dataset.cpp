#include "wden/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "wden/wav.hpp"

namespace wden {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& why) {
  throw std::runtime_error("dataset: " + what + ": " + why);
}

}  // namespace

PairDataset scan_pairs(const std::string& root) {
  const fs::path noisy_dir = fs::path(root) / "noisy";
  const fs::path clean_dir = fs::path(root) / "clean";
  if (!fs::is_directory(noisy_dir)) fail(root, "missing noisy/ directory");
  if (!fs::is_directory(clean_dir)) fail(root, "missing clean/ directory");

  PairDataset ds;
  for (const auto& e : fs::directory_iterator(noisy_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".wav") continue;
    const std::string name = e.path().filename().string();
    const fs::path clean = clean_dir / name;
    if (!fs::is_regular_file(clean)) fail(name, "no clean partner");
    ds.entries.push_back({name, clean.string(), e.path().string()});
  }
  if (ds.entries.empty()) fail(root, "no .wav files under noisy/");
  std::sort(ds.entries.begin(), ds.entries.end(),
            [](const PairEntry& a, const PairEntry& b) { return a.name < b.name; });
  return ds;
}

LoadedPair load_pair(const PairEntry& entry, int expected_rate) {
  const WavData clean = read_wav(entry.clean_path);
  const WavData noisy = read_wav(entry.noisy_path);
  if (clean.sample_rate != noisy.sample_rate)
    fail(entry.name, "clean/noisy sample rates differ");
  if (clean.samples.size() != noisy.samples.size())
    fail(entry.name, "clean/noisy lengths differ");
  if (expected_rate > 0 && clean.sample_rate != expected_rate)
    fail(entry.name, "sample rate " + std::to_string(clean.sample_rate) + ", expected " +
                         std::to_string(expected_rate));

  const Index t_n = Index(clean.samples.size());
  LoadedPair out;
  out.sample_rate = clean.sample_rate;
  out.pair.clean = Tensor<float>(1, 1, t_n);
  out.pair.noise = Tensor<float>(1, 1, t_n);
  for (Index t = 0; t < t_n; ++t) {
    out.pair.clean.row(0, 0)[t] = clean.samples[size_t(t)];
    out.pair.noise.row(0, 0)[t] = noisy.samples[size_t(t)] - clean.samples[size_t(t)];
  }
  return out;
}

}  // namespace wden
