#include "layerpool/image.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

namespace layerpool {

namespace {

constexpr double kRangeSlack = 1e-9;

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

ImageRaster decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw InvalidInput("cannot read PNG '" + path.string() + "': " + image.message);
  }
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const Index channels = colour ? 3 : 1;
  const Index width = image.width;
  const Index height = image.height;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw InvalidInput("cannot decode PNG '" + path.string() + "': " + message);
  }
  ImageRaster::Storage pixels(channels, width * height);
  for (Index i = 0; i < width * height; ++i) {
    for (Index c = 0; c < channels; ++c) {
      pixels(c, i) = buffer[static_cast<std::size_t>(i * channels + c)] / 255.0;
    }
  }
  return ImageRaster(width, height, channels, std::move(pixels));
}

class PnmReader {
 public:
  explicit PnmReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw InvalidInput("malformed PNM header");
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > (1L << 30)) throw InvalidInput("PNM header value out of range");
    }
    return value;
  }

  void skip_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw InvalidInput("malformed PNM header");
    }
    ++pos_;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  unsigned char byte() { return bytes_[pos_++]; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 2;
};

ImageRaster decode_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), {}};
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw InvalidInput("'" + path.string() + "' is not a PNM file");
  }
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw InvalidInput("unsupported PNM variant P" + std::string(1, kind));
  }
  const bool ascii = kind == '2' || kind == '3';
  const Index channels = (kind == '3' || kind == '6') ? 3 : 1;

  PnmReader reader(std::move(bytes));
  const long width = reader.next_int();
  const long height = reader.next_int();
  const long maxval = reader.next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw InvalidInput("invalid PNM dimensions or maxval in '" + path.string() + "'");
  }

  const Index cells = width * height;
  ImageRaster::Storage pixels(channels, cells);
  if (ascii) {
    for (Index i = 0; i < cells; ++i) {
      for (Index c = 0; c < channels; ++c) {
        const long v = reader.next_int();
        if (v > maxval) throw InvalidInput("PNM sample exceeds maxval");
        pixels(c, i) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  } else {
    reader.skip_single_whitespace();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    if (reader.remaining() < static_cast<std::size_t>(cells * channels) * sample_bytes) {
      throw InvalidInput("truncated PNM payload in '" + path.string() + "'");
    }
    for (Index i = 0; i < cells; ++i) {
      for (Index c = 0; c < channels; ++c) {
        long v = reader.byte();
        if (sample_bytes == 2) v = (v << 8) | reader.byte();
        if (v > maxval) throw InvalidInput("PNM sample exceeds maxval");
        pixels(c, i) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return ImageRaster(width, height, channels, std::move(pixels));
}

}  // namespace

ImageRaster::ImageRaster(Index width, Index height, Index channels, Storage pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width_ <= 0 || height_ <= 0) throw InvalidInput("image extents must be positive");
  if (channels_ != 1 && channels_ != 3) throw InvalidInput("images must have 1 or 3 channels");
  if (pixels_.rows() != channels_ || pixels_.cols() != width_ * height_) {
    throw InvalidInput("pixel block does not match image shape");
  }
  if (!pixels_.allFinite() || pixels_.minCoeff() < -kRangeSlack ||
      pixels_.maxCoeff() > 1.0 + kRangeSlack) {
    throw InvalidInput("pixel values must lie in [0, 1]");
  }
}

ImageRaster ImageRaster::from_values(Index width, Index height, Index channels,
                                     std::span<const double> values) {
  if (width <= 0 || height <= 0 ||
      static_cast<Index>(values.size()) != width * height * channels) {
    throw InvalidInput("value count does not match image shape");
  }
  Storage pixels = Eigen::Map<const Storage>(values.data(), channels, width * height);
  return ImageRaster(width, height, channels, std::move(pixels));
}

ImageRaster ImageRaster::constant(Index width, Index height, Index channels, double value) {
  if (width <= 0 || height <= 0) throw InvalidInput("image extents must be positive");
  return ImageRaster(width, height, channels, Storage::Constant(channels, width * height, value));
}

ImageRaster with_channels(const ImageRaster& image, Index channels) {
  if (channels == image.channels()) return image;
  if (channels == 3) {
    ImageRaster::Storage pixels = image.pixels().replicate(3, 1);
    return ImageRaster(image.width(), image.height(), 3, std::move(pixels));
  }
  if (channels == 1) {
    ImageRaster::Storage pixels = image.pixels().colwise().mean();
    return ImageRaster(image.width(), image.height(), 1, std::move(pixels));
  }
  throw InvalidInput("images must have 1 or 3 channels");
}

ImageRaster decode_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return decode_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return decode_pnm(path);
  throw InvalidInput("unsupported image format '" + ext + "' (PNG, PPM and PGM only)");
}

void write_pnm(const std::filesystem::path& path, const ImageRaster& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write image '" + path.string() + "'");
  out << (image.channels() == 3 ? "P6" : "P5") << '\n'
      << image.width() << ' ' << image.height() << "\n255\n";
  const Index cells = image.width() * image.height();
  for (Index i = 0; i < cells; ++i) {
    for (Index c = 0; c < image.channels(); ++c) {
      const double v = std::clamp(image.pixels()(c, i), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

}  // namespace layerpool
