#include "layerpool/resize.hpp"

#include <algorithm>
#include <cmath>

namespace layerpool {

Index round_half_up(double x) { return static_cast<Index>(std::floor(x + 0.5)); }

Index ScalePlan::effective_long_side() const {
  if (scale1_long_side <= 0 || !(scale > 0.0)) {
    throw InvalidInput("scale plan needs a positive long side and a positive scale");
  }
  const Index side = round_half_up(static_cast<double>(scale1_long_side) * scale);
  if (side < 1) throw InvalidInput("scale plan yields a long side below one pixel");
  return side;
}

ScalePlan ScalePlan::at_scale(double s) const {
  ScalePlan plan{scale1_long_side, s};
  plan.effective_long_side();
  return plan;
}

ScalePlan compute_scale1(std::span<const ImageSize> sizes) {
  if (sizes.empty()) throw InvalidInput("compute_scale1 needs at least one image size");
  double width_sum = 0.0;
  double height_sum = 0.0;
  for (const auto& s : sizes) {
    if (s.width <= 0 || s.height <= 0) throw InvalidInput("image sizes must be positive");
    width_sum += static_cast<double>(s.width);
    height_sum += static_cast<double>(s.height);
  }
  const double n = static_cast<double>(sizes.size());
  return ScalePlan{round_half_up(std::max(width_sum / n, height_sum / n)), 1.0};
}

ImageSize target_dims(ImageSize orig, const ScalePlan& plan) {
  if (orig.width <= 0 || orig.height <= 0) throw InvalidInput("image size must be positive");
  const Index target_long = plan.effective_long_side();
  const bool landscape = orig.width >= orig.height;
  const Index long_side = landscape ? orig.width : orig.height;
  const Index short_side = landscape ? orig.height : orig.width;
  // round_half_up(short * target / long) in exact integer arithmetic.
  const Index target_short = std::max<Index>(
      1, (2 * short_side * target_long + long_side) / (2 * long_side));
  return landscape ? ImageSize{target_long, target_short} : ImageSize{target_short, target_long};
}

namespace {

struct Tap {
  Index lo;
  Index hi;
  double frac;
};

std::vector<Tap> interpolation_taps(Index in, Index out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const Index lo = static_cast<Index>(std::floor(src));
    const Index hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

ImageRaster bilinear_resize(const ImageRaster& image, ImageSize dims) {
  if (dims.width <= 0 || dims.height <= 0) throw InvalidInput("resize target must be positive");
  if (dims == image.size()) return image;

  const auto xs = interpolation_taps(image.width(), dims.width);
  const auto ys = interpolation_taps(image.height(), dims.height);
  ImageRaster::Storage out(image.channels(), dims.width * dims.height);
  for (Index c = 0; c < image.channels(); ++c) {
    for (Index y = 0; y < dims.height; ++y) {
      const Tap& ty = ys[static_cast<std::size_t>(y)];
      for (Index x = 0; x < dims.width; ++x) {
        const Tap& tx = xs[static_cast<std::size_t>(x)];
        const double top = std::lerp(image(c, ty.lo, tx.lo), image(c, ty.lo, tx.hi), tx.frac);
        const double bottom = std::lerp(image(c, ty.hi, tx.lo), image(c, ty.hi, tx.hi), tx.frac);
        out(c, y * dims.width + x) = std::clamp(std::lerp(top, bottom, ty.frac), 0.0, 1.0);
      }
    }
  }
  return ImageRaster(dims.width, dims.height, image.channels(), std::move(out));
}

}  // namespace layerpool
