#include "layerpool/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace layerpool {

ImageRaster synthetic_pattern(Index width, Index height, Index channels, std::uint64_t seed) {
  if (width <= 0 || height <= 0) throw InvalidInput("pattern extents must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ImageRaster::Storage pixels(channels, width * height);
  for (Index c = 0; c < channels; ++c) {
    struct Wave { double fx, fy, phase, amp; };
    struct Blob { double x, y, radius, amp; };
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
      const double angle = unit(rng) * 2.0 * std::numbers::pi;
      const double freq = (1.0 + 4.0 * unit(rng)) / static_cast<double>(std::max(width, height));
      w = {freq * std::cos(angle), freq * std::sin(angle), unit(rng) * 2.0 * std::numbers::pi, 0.5 + unit(rng)};
    }
    std::vector<Blob> blobs(4);
    for (auto& b : blobs) {
      b = {unit(rng) * width, unit(rng) * height, (0.05 + 0.15 * unit(rng)) * std::max(width, height),
           unit(rng) < 0.5 ? -1.5 : 1.5};
    }
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) {
        double v = 0.0;
        for (const auto& w : waves) v += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        for (const auto& b : blobs) {
          const double dx = x - b.x;
          const double dy = y - b.y;
          v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
        }
        pixels(c, y * width + x) = v;
      }
    }
    const double lo = pixels.row(c).minCoeff();
    const double hi = pixels.row(c).maxCoeff();
    if (hi > lo) {
      pixels.row(c) = ((pixels.row(c).array() - lo) / (hi - lo)).matrix();
    } else {
      pixels.row(c).setConstant(0.5);
    }
  }
  return ImageRaster(width, height, channels, std::move(pixels));
}

std::vector<SyntheticImage> make_group_images(const SyntheticGroupsSpec& spec) {
  if (spec.groups < 1 || spec.per_group < 1 || spec.max_shift < 0 || spec.noise < 0.0) {
    throw InvalidInput("invalid synthetic group spec");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<Index> offset(0, spec.max_shift);
  std::normal_distribution<double> noise(0.0, spec.noise);
  const Index big_w = spec.width + spec.max_shift;
  const Index big_h = spec.height + spec.max_shift;
  std::vector<SyntheticImage> out;
  for (int g = 0; g < spec.groups; ++g) {
    const ImageRaster base = synthetic_pattern(big_w, big_h, spec.channels, rng());
    for (int m = 0; m < spec.per_group; ++m) {
      const Index ox = offset(rng);
      const Index oy = offset(rng);
      ImageRaster::Storage pixels(spec.channels, spec.width * spec.height);
      for (Index c = 0; c < spec.channels; ++c) {
        for (Index y = 0; y < spec.height; ++y) {
          for (Index x = 0; x < spec.width; ++x) {
            const double v = base(c, y + oy, x + ox) + (spec.noise > 0.0 ? noise(rng) : 0.0);
            pixels(c, y * spec.width + x) = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      char id[32];
      std::snprintf(id, sizeof id, "g%02d_%02d", g, m);
      out.push_back({id, g, ImageRaster(spec.width, spec.height, spec.channels, std::move(pixels))});
    }
  }
  return out;
}

DatasetManifest group_manifest(const std::vector<SyntheticImage>& images) {
  DatasetManifest manifest;
  RelevanceManifest relevance;
  relevance.exclude_self = false;
  for (const auto& item : images) {
    ImageEntry entry;
    entry.id = item.id;
    entry.size = item.image.size();
    entry.label = item.group;
    entry.split = "database";
    manifest.images.push_back(entry);
    if (static_cast<int>(relevance.groups.size()) <= item.group) relevance.groups.resize(item.group + 1);
    relevance.groups[item.group].push_back(item.id);
    manifest.class_count = std::max(manifest.class_count, item.group + 1);
  }
  manifest.relevance = std::move(relevance);
  return manifest;
}

DatasetManifest write_group_dataset(const SyntheticGroupsSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto images = make_group_images(spec);
  DatasetManifest manifest = group_manifest(images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string file = images[i].id + (spec.channels == 3 ? ".ppm" : ".pgm");
    write_pnm(dir / file, images[i].image);
    manifest.images[i].path = dir / file;
  }
  manifest.save(dir / "manifest.json");
  return manifest;
}

}  // namespace layerpool
