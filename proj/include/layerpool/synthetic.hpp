#pragma once

/**
 * @file synthetic.hpp
 *
 * @brief Generated datasets for tests, demos and the end-to-end checks.
 */

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerpool/image.hpp"
#include "layerpool/manifest.hpp"

namespace layerpool {

/// `groups` base patterns; each member is a window of its pattern at a random
/// offset in [0, max_shift]^2 plus clamped Gaussian noise.
struct SyntheticGroupsSpec {
  int groups = 5;
  int per_group = 4;
  Index width = 64;
  Index height = 64;
  Index channels = 3;
  Index max_shift = 6;
  double noise = 0.03;
  std::uint64_t seed = 0;
};

struct SyntheticImage {
  std::string id;
  int group = 0;
  ImageRaster image;
};

/// A smooth random pattern: a sum of oriented sinusoids and blobs, rescaled to [0, 1].
ImageRaster synthetic_pattern(Index width, Index height, Index channels, std::uint64_t seed);

std::vector<SyntheticImage> make_group_images(const SyntheticGroupsSpec& spec);

/// Group-only relevance (ids in generation order), labels = group index.
DatasetManifest group_manifest(const std::vector<SyntheticImage>& images);

/// Writes every image as `<id>.ppm` (or .pgm) plus `manifest.json` under `dir`.
DatasetManifest write_group_dataset(const SyntheticGroupsSpec& spec, const std::filesystem::path& dir);

}  // namespace layerpool
