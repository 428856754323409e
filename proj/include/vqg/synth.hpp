#pragma once

#include <cstdint>
#include <vector>

#include "vqg/corpus.hpp"

namespace vqg {

/// Clustered synthetic corpus. Each cluster owns a centroid on the unit
/// sphere and a question template; images get a noisy, re-normalised copy of
/// their centroid and five references: four template variants plus a fifth
/// that is an unrelated outlier with probability `outlier_prob`.
struct SynthConfig {
  std::size_t n_images = 1000;
  std::size_t n_clusters = 20;
  int feature_dim = 64;
  double sigma = 0.05;  // per-coordinate noise
  double outlier_prob = 0.5;
  double slot_variation = 0.25;  // chance a template slot takes an alternative filler
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<ImageRecord> synth_dataset(const SynthConfig& cfg);

}  // namespace vqg
