#include "wden/wav.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "wav io assumes a little-endian host");

namespace wden {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("wav: " + path + ": " + why);
}

uint32_t read_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

uint16_t read_u16(const char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    fail(path, "not a RIFF/WAVE file");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_pos = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const uint32_t len = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size()) fail(path, "truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (len < 16) fail(path, "fmt chunk too short");
      format = read_u16(bytes.data() + pos);
      channels = read_u16(bytes.data() + pos + 2);
      rate = read_u32(bytes.data() + pos + 4);
      bits = read_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = pos;
      data_len = len;
    }
    pos += len + (len % 2);  // chunks are word-aligned
  }
  if (!have_fmt) fail(path, "missing fmt chunk");
  if (data_pos == 0 && data_len == 0) fail(path, "missing data chunk");
  if (format != 1) fail(path, "not 16-bit integer PCM");
  if (bits != 16) fail(path, "expected 16-bit samples, got " + std::to_string(bits));
  if (channels != 1) fail(path, "expected mono, got " + std::to_string(channels) + " channels");
  if (data_len % 2 != 0) fail(path, "odd data chunk length");

  WavData out;
  out.sample_rate = int(rate);
  out.samples.resize(data_len / 2);
  for (size_t i = 0; i < out.samples.size(); ++i) {
    int16_t v;
    std::memcpy(&v, bytes.data() + data_pos + 2 * i, 2);
    out.samples[i] = float(v) / 32768.0f;
  }
  return out;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  if (sample_rate <= 0) fail(path, "invalid sample rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");

  const uint32_t data_len = uint32_t(samples.size() * 2);
  auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };

  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // integer PCM
  put_u16(1);  // mono
  put_u32(uint32_t(sample_rate));
  put_u32(uint32_t(sample_rate) * 2);  // byte rate
  put_u16(2);                          // block align
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (float s : samples) {
    const float scaled = std::nearbyint(s * 32768.0f);
    const int16_t v = int16_t(std::min(32767.0f, std::max(-32768.0f, scaled)));
    out.write(reinterpret_cast<const char*>(&v), 2);
  }
  if (!out) fail(path, "write failed");
}

}  // namespace wden
