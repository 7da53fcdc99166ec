#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "layerpool/tensor.hpp"

namespace layerpool {

struct ImageSize {
  Index width = 0;
  Index height = 0;

  bool operator==(const ImageSize&) const = default;
};

/**
 * @brief A decoded image: 1 or 3 channels, values in [0, 1], channel-major.
 *
 * Uses the same `channels x (height * width)` storage as FeatureMap so it can
 * be fed to the network without reshaping.
 */
class ImageRaster {
 public:
  using Storage = CellMatrix<double>;

  ImageRaster(Index width, Index height, Index channels, Storage pixels);

  static ImageRaster from_values(Index width, Index height, Index channels,
                                 std::span<const double> values);
  static ImageRaster constant(Index width, Index height, Index channels, double value);

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index channels() const { return channels_; }
  ImageSize size() const { return {width_, height_}; }

  double operator()(Index channel, Index row, Index col) const {
    return pixels_(channel, row * width_ + col);
  }
  const Storage& pixels() const { return pixels_; }

  FeatureMap<double> to_feature_map(std::string name = "input") const {
    return FeatureMap<double>(width_, height_, channels_, pixels_, std::move(name));
  }

 private:
  Index width_;
  Index height_;
  Index channels_;
  Storage pixels_;
};

/// 1 -> 3 channels replicates the grey plane; 3 -> 1 averages the colour planes.
ImageRaster with_channels(const ImageRaster& image, Index channels);

/// Decodes a PNG, PPM (P3/P6) or PGM (P2/P5) file. Grey+alpha and RGBA PNGs
/// drop their alpha channel.
ImageRaster decode_image(const std::filesystem::path& path);

/// Binary PGM for 1 channel, binary PPM for 3; 8-bit, rounded to nearest.
void write_pnm(const std::filesystem::path& path, const ImageRaster& image);

}  // namespace layerpool
