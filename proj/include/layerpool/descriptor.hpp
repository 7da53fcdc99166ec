#pragma once

/**
 * @file descriptor.hpp
 *
 * @brief Per-layer descriptors and their concatenation into one image vector.
 *
 * Each layer's map is globally pooled, root-normalized (signed sqrt, then l2),
 * and, when fusing, the per-layer vectors are concatenated in the configured
 * order and l2-normalized once more.
 */

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "layerpool/cnn.hpp"
#include "layerpool/npy.hpp"
#include "layerpool/resize.hpp"
#include "layerpool/tensor.hpp"

namespace layerpool {

struct PipelineConfig {
  PoolingMode pooling = PoolingMode::Average;
  std::vector<std::string> layers;
  bool fuse = false;

  /// Throws unless layers is non-empty and a non-fused config names exactly one layer.
  void validate() const;
};

DescriptorVector<double> layer_descriptor(const FeatureMap<double>& map, PoolingMode mode);

/// Concatenates already-normalized descriptors and l2-normalizes the result.
DescriptorVector<double> fuse_concat(std::span<const DescriptorVector<double>> parts);

/// Builds the configured descriptor from precomputed tap maps.
DescriptorVector<double> describe_maps(const TapMaps& maps, const PipelineConfig& cfg);

/// Resize per plan, forward through `net`, then describe_maps.
DescriptorVector<double> describe(const ImageRaster& image, const NetworkSpec& net,
                                  const PipelineConfig& cfg, const ScalePlan& plan);

/// Channel counts of the fused layers of a known network, in forward order.
struct ChannelTable {
  std::string model;
  std::vector<std::pair<std::string, Index>> layers;

  Index channels(std::string_view layer) const;
  std::vector<std::string> layer_names() const;
};

const ChannelTable& alexnet_channel_table();
const ChannelTable& vgg19_channel_table();
/// "alexnet", "vgg19" or "toy" (the default toy network's taps).
ChannelTable channel_table(std::string_view model);

/// Sum of the table's channel counts over `layers` (all layers when empty).
Index fused_dimension(const ChannelTable& table, std::span<const std::string> layers = {});

/**
 * @brief n descriptors of equal dimension, persisted as an n x dim float32
 * tensor file plus `<path>.json` holding ids, config and fingerprint.
 */
struct DescriptorSet {
  CellMatrix<double> rows;
  std::vector<std::string> ids;
  nlohmann::json config = nlohmann::json::object();
  std::string fingerprint;

  Index size() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }
};

std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path);
void save_descriptor_set(const DescriptorSet& set, const std::filesystem::path& path);
DescriptorSet load_descriptor_set(const std::filesystem::path& path);

/// Converts a (channels, height, width) or (channels,) tensor into a feature map.
FeatureMap<double> feature_map_from_tensor(const Tensor& tensor, std::string layer_name);

}  // namespace layerpool
