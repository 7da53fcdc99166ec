#pragma once

/**
 * @file npy.hpp
 *
 * @brief Reader/writer for a strict subset of the NPY array format.
 *
 * Only version 1.0 headers, little-endian float32 (`'<f4'`) and C order are
 * accepted. The header is the usual Python dict literal padded with spaces
 * and terminated by a newline so that the payload starts on a 64-byte
 * boundary. Payload bits are copied verbatim in both directions.
 */

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "layerpool/error.hpp"

namespace layerpool {

class TensorFormatError : public std::runtime_error {
 public:
  enum class Kind {
    Io,                  ///< file could not be opened, read or written
    BadMagic,            ///< does not start with "\x93NUMPY"
    UnsupportedVersion,  ///< anything but 1.0
    MalformedHeader,     ///< header dict missing keys or unparsable
    UnsupportedDtype,    ///< descr other than '<f4'
    UnsupportedOrder,    ///< fortran_order: True
    TruncatedPayload,    ///< fewer than product(shape) * 4 payload bytes
    TrailingData,        ///< bytes after the payload
  };

  TensorFormatError(Kind kind, const std::string& message);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(TensorFormatError::Kind kind);

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  std::size_t element_count() const;
};

std::size_t shape_product(std::span<const std::size_t> shape);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace layerpool
