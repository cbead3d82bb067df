#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lfsr/metrics.hpp"
#include "lfsr/tensor.hpp"

namespace lfsr {

struct PhantomConfig {
  std::size_t image_size = 128;
  std::size_t n_samples = 200;
  std::uint64_t seed = 1;
  double lesion_radius_min = 6.0;
  double lesion_radius_max = 20.0;

  void validate() const;
};

// One dataset record: HR slice in [-1,1], binary lesion mask and its tight
// bounding box (HR pixel coordinates).
struct Sample {
  std::uint64_t id = 0;
  Tensor hr;
  Tensor lesion_mask;
  BoundingBox bbox;
};

// Synthetic brain-like slice: skull ring, smooth textured parenchyma and one
// bright elliptical lesion with a soft rim. Deterministic in (seed, id).
// Throws DataError if the lesion cannot be placed inside the brain.
Sample gen_phantom(const PhantomConfig& cfg, std::uint64_t id);
std::vector<Sample> gen_dataset(const PhantomConfig& cfg);

// Tight axis-aligned bounds of mask > 0.5. Throws DataError for an empty mask.
BoundingBox tight_bounds(const Tensor& mask);

struct DatasetSplit {
  std::vector<std::size_t> train;       // indices into the sample list
  std::vector<std::size_t> validation;  // ~20%, chosen by id hash rank
};

// Stable 80/20 split: the 20% of samples with the smallest id hash form the
// validation set. Depends only on the ids.
DatasetSplit split_dataset(const std::vector<Sample>& samples, double validation_fraction = 0.2);

std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);

// Dataset directory: samples.txt ("id file row0 col0 height width" per line)
// plus one tensor container per sample holding "hr" and "mask".
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

inline constexpr const char* kDatasetManifest = "samples.txt";

}  // namespace lfsr
