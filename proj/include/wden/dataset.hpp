#pragma once

#include <string>
#include <vector>

#include "wden/augment.hpp"

namespace wden {

struct PairEntry {
  std::string name;  // shared file name under both subdirectories
  std::string clean_path;
  std::string noisy_path;
};

// A directory of matched recordings: <root>/clean/<name>.wav holds the target
// and <root>/noisy/<name>.wav the degraded version of the same utterance.
struct PairDataset {
  std::vector<PairEntry> entries;  // sorted by name
};

// Lists <root>/noisy/*.wav and pairs each file with its clean partner.
// A noisy file without a clean partner, or an empty listing, is an error.
PairDataset scan_pairs(const std::string& root);

struct LoadedPair {
  PairBatch<float> pair;  // batch of one; noise = noisy - clean
  int sample_rate = 0;
};

// Reads one entry. Lengths and rates of the two files must match, and the
// rate must equal expected_rate when that is nonzero.
LoadedPair load_pair(const PairEntry& entry, int expected_rate = 0);

}  // namespace wden
