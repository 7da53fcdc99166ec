#pragma once

/**
 * @file resize.hpp
 *
 * @brief Dataset-dependent input sizing.
 *
 * Scale 1.0 is the size whose long side equals the larger of the dataset's
 * mean width and mean height. Other scales are expressed as a ratio of that
 * long side. Images always keep their aspect ratio. All pixel dimensions are
 * rounded half-up.
 */

#include <span>

#include "layerpool/image.hpp"

namespace layerpool {

struct ScalePlan {
  Index scale1_long_side = 0;
  double scale = 1.0;

  /// round(scale1_long_side * scale); throws if that is below one pixel.
  Index effective_long_side() const;
  bool upscales() const { return scale > 1.0; }
  ScalePlan at_scale(double s) const;
};

/// floor(x + 0.5).
Index round_half_up(double x);

ScalePlan compute_scale1(std::span<const ImageSize> sizes);

/// The long side of `orig` maps to the plan's effective long side; the short
/// side scales by the same factor (integer rounding, at least 1). A square
/// image treats its width as the long side.
ImageSize target_dims(ImageSize orig, const ScalePlan& plan);

/// Bilinear interpolation on half-pixel centres with edge clamping.
ImageRaster bilinear_resize(const ImageRaster& image, ImageSize dims);

}  // namespace layerpool
