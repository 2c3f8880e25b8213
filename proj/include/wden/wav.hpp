#pragma once

#include <string>
#include <vector>

namespace wden {

struct WavData {
  std::vector<float> samples;  // mono, in [-1, 1)
  int sample_rate = 0;
};

// Reads a mono 16-bit PCM WAV file; anything else is rejected with a reason.
// Samples are scaled by 1/32768.
WavData read_wav(const std::string& path);

// Writes mono 16-bit PCM; samples are scaled by 32768, rounded and clamped.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

}  // namespace wden
