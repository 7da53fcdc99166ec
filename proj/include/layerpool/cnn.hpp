#pragma once

/**
 * @file cnn.hpp
 *
 * @brief A small deterministic convolutional network.
 *
 * Enough of a CNN to run the full image -> multi-layer maps -> descriptor
 * path without external model weights. Layers are applied in order; any
 * layer whose name is listed in `tap_points` has its output returned by
 * forward(). Input size is free as long as every layer's window fits.
 *
 * Weight matrices are `out_channels x (in_channels * kernel * kernel)` with
 * columns ordered (input channel, kernel row, kernel column), column fastest.
 * A flatten-fc layer is a dense layer over each kernel x kernel window at
 * stride 1 without padding: on an input whose extent equals the kernel it is
 * the usual flatten + linear, on larger inputs it yields a spatial map.
 */

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "layerpool/image.hpp"
#include "layerpool/tensor.hpp"

namespace layerpool {

enum class LayerKind { Conv, Relu, MaxPool, FlattenFc };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  Index kernel_size = 1;
  Index stride = 1;
  Index padding = 0;
  Index out_channels = 0;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  static LayerSpec conv(std::string name, Index in_channels, Index out_channels, Index kernel,
                        Index stride = 1, Index padding = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool(std::string name, Index kernel, Index stride, Index padding = 0);
  static LayerSpec flatten_fc(std::string name, Index in_channels, Index out_channels,
                              Index kernel);

  bool has_weights() const { return kind == LayerKind::Conv || kind == LayerKind::FlattenFc; }
  Index in_channels() const;
};

/// conv2d/maxpool2d output extent: floor((in + 2 * pad - kernel) / stride) + 1.
/// Returns a value below 1 when the window does not fit.
Index window_output_extent(Index in, Index kernel, Index stride, Index padding);

FeatureMap<double> conv2d(const FeatureMap<double>& input, const LayerSpec& layer);
FeatureMap<double> relu(const FeatureMap<double>& map);
FeatureMap<double> maxpool2d(const FeatureMap<double>& map, const LayerSpec& layer);
FeatureMap<double> apply_layer(const FeatureMap<double>& input, const LayerSpec& layer);

class NetworkSpec {
 public:
  NetworkSpec(Index input_channels, std::vector<LayerSpec> layers,
              std::vector<std::string> tap_points);

  Index input_channels() const { return input_channels_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::string>& tap_points() const { return tap_points_; }
  /// Output channel count of each tap, in tap order.
  std::vector<Index> tap_channels() const;

  /// Fills every weighted layer from a uniform(-0.5, 0.5) stream seeded by `seed`,
  /// walking layers in order, weights before bias, row-major.
  void initialize(std::uint64_t seed);
  /// The seed of the last initialize() call, if weights came from a seed.
  std::optional<std::uint64_t> seed() const { return seed_; }

 private:
  Index input_channels_;
  std::optional<std::uint64_t> seed_;
  std::vector<LayerSpec> layers_;
  std::vector<std::string> tap_points_;
};

using TapMaps = std::map<std::string, FeatureMap<double>>;

/// Runs every layer. Throws InvalidInput naming the first layer whose window
/// no longer fits the incoming map.
TapMaps forward(const FeatureMap<double>& input, const NetworkSpec& net);
TapMaps forward(const ImageRaster& image, const NetworkSpec& net);

/// Three conv(3x3, pad 1) -> relu -> maxpool(2, 2) blocks with 4, 8 and 16
/// channels tapped as conv1..conv3, then a 4x4 flatten-fc to 32 channels and a
/// relu tapped as fc. Minimum input 32x32.
NetworkSpec default_toy_network(std::uint64_t seed = 0);

/**
 * JSON layout:
 *
 *     {"input_channels": 3, "seed": 7, "tap_points": ["conv1", ...],
 *      "layers": [{"name": "conv1.conv", "kind": "conv", "kernel_size": 3,
 *                  "stride": 1, "padding": 1, "out_channels": 4,
 *                  "weights": [...], "bias": [...]}, ...]}
 *
 * `weights`/`bias` may be omitted from all layers when `seed` is present,
 * in which case initialize(seed) fills them.
 */
nlohmann::json network_to_json(const NetworkSpec& net, bool include_weights = true);
NetworkSpec network_from_json(const nlohmann::json& doc);

}  // namespace layerpool
