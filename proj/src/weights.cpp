#include "wden/weights.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "weight io assumes a little-endian host");

namespace wden {

namespace {

constexpr const char* kMagic = "WDEN1";

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("weights: " + path + ": " + why);
}

std::string shape_str(const std::vector<Index>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

// Shortest decimal form that round-trips the double, so headers are stable.
std::string double_str(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

void save_weights(const std::string& path, const ModelConfig& cfg, ModelParams<float>& params) {
  cfg.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");

  auto views = param_views(params);
  std::ostringstream head;
  head << kMagic << '\n'
       << "depth " << cfg.depth << '\n'
       << "hidden " << cfg.hidden << '\n'
       << "kernel " << cfg.kernel << '\n'
       << "stride " << cfg.stride << '\n'
       << "resample " << cfg.resample << '\n'
       << "causal " << (cfg.causal ? 1 : 0) << '\n'
       << "normalize " << (cfg.normalize ? 1 : 0) << '\n'
       << "floor_std " << double_str(cfg.floor_std) << '\n'
       << "sample_rate " << cfg.sample_rate << '\n';
  Index offset = 0;
  for (const auto& v : views) {
    head << "tensor " << v.name << ' ' << shape_str(v.shape) << ' ' << offset << '\n';
    offset += v.size;
  }
  head << "data " << offset * Index(sizeof(float)) << '\n';
  const std::string h = head.str();
  out.write(h.data(), std::streamsize(h.size()));
  for (const auto& v : views)
    out.write(reinterpret_cast<const char*>(v.data), std::streamsize(v.size * sizeof(float)));
  if (!out) fail(path, "write failed");
}

LoadedModel load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");

  std::string line;
  if (!std::getline(in, line) || line != kMagic) fail(path, "bad magic");

  ModelConfig cfg;
  bool causal_set = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor" || key == "data") break;
    long long iv = 0;
    if (key == "depth") ls >> cfg.depth;
    else if (key == "hidden") ls >> cfg.hidden;
    else if (key == "kernel") ls >> cfg.kernel;
    else if (key == "stride") ls >> cfg.stride;
    else if (key == "resample") ls >> cfg.resample;
    else if (key == "causal") { ls >> iv; cfg.causal = iv != 0; causal_set = true; }
    else if (key == "normalize") { ls >> iv; cfg.normalize = iv != 0; }
    else if (key == "floor_std") ls >> cfg.floor_std;
    else if (key == "sample_rate") ls >> cfg.sample_rate;
    else fail(path, "unknown header key '" + key + "'");
    if (!ls) fail(path, "malformed header line '" + line + "'");
  }
  if (!causal_set) fail(path, "header ended before config was complete");
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }

  LoadedModel m{cfg, zero_params<float>(cfg)};
  auto views = param_views(m.params);
  Index expect_offset = 0;
  size_t idx = 0;
  // `line` currently holds the first tensor (or data) line.
  for (;; std::getline(in, line)) {
    if (!in) fail(path, "header ended before data line");
    std::istringstream ls(line);
    std::string key, name, shape;
    Index offset = -1;
    ls >> key;
    if (key == "data") break;
    if (key != "tensor") fail(path, "expected tensor line, got '" + line + "'");
    ls >> name >> shape >> offset;
    if (!ls) fail(path, "malformed tensor line '" + line + "'");
    if (idx >= views.size()) fail(path, "more tensors than the config implies");
    const auto& v = views[idx];
    if (name != v.name) fail(path, "tensor " + std::to_string(idx) + ": expected '" + v.name + "', got '" + name + "'");
    if (shape != shape_str(v.shape)) fail(path, name + ": shape " + shape + " does not match config (" + shape_str(v.shape) + ")");
    if (offset != expect_offset) fail(path, name + ": bad offset");
    expect_offset += v.size;
    ++idx;
  }
  if (idx != views.size()) fail(path, "fewer tensors than the config implies");

  Index payload = -1;
  {
    std::istringstream ls(line);
    std::string key;
    ls >> key >> payload;
    if (!ls || payload != expect_offset * Index(sizeof(float))) fail(path, "payload size mismatch");
  }
  for (const auto& v : views) {
    in.read(reinterpret_cast<char*>(v.data), std::streamsize(v.size * sizeof(float)));
    if (!in) fail(path, "payload truncated at '" + v.name + "'");
  }
  char extra;
  if (in.read(&extra, 1)) fail(path, "trailing bytes after payload");
  return m;
}

}  // namespace wden
