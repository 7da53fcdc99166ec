#include "layerpool/npy.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string_view>

#include "layerpool/error.hpp"

namespace layerpool {

namespace {

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kPreambleSize = 10;  // magic + version + uint16 header length
constexpr std::size_t kAlignment = 64;

using Kind = TensorFormatError::Kind;

std::string shape_literal(const std::vector<std::size_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  if (shape.size() == 1) out += ",";
  return out + ")";
}

// Minimal parser for the header dict: {'key': value, ...}. Values are a
// quoted string, True/False, or a tuple of non-negative integers.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  struct Fields {
    std::optional<std::string> descr;
    std::optional<bool> fortran_order;
    std::optional<std::vector<std::size_t>> shape;
  };

  Fields parse() {
    Fields fields;
    expect('{');
    while (true) {
      skip_space();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = quoted();
      expect(':');
      skip_space();
      if (key == "descr") {
        fields.descr = quoted();
      } else if (key == "fortran_order") {
        fields.fortran_order = boolean();
      } else if (key == "shape") {
        fields.shape = tuple();
      } else {
        fail("unexpected header key '" + key + "'");
      }
      skip_space();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail("expected ',' or '}' in header");
      }
    }
    skip_space();
    if (pos_ != text_.size()) fail("unexpected characters after header dict");
    return fields;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw TensorFormatError(Kind::MalformedHeader, what);
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\n' || text_[pos_] == '\t')) {
      ++pos_;
    }
  }

  void expect(char ch) {
    skip_space();
    if (peek() != ch) fail(std::string("expected '") + ch + "' in header");
    ++pos_;
  }

  std::string quoted() {
    skip_space();
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected a quoted string in header");
    const std::size_t end = text_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string in header");
    std::string out(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  bool boolean() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False in header");
  }

  std::vector<std::size_t> tuple() {
    expect('(');
    std::vector<std::size_t> dims;
    while (true) {
      skip_space();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected a dimension in shape");
      std::size_t value = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        const std::size_t digit = static_cast<std::size_t>(text_[pos_++] - '0');
        if (value > (std::numeric_limits<std::size_t>::max() - digit) / 10) fail("dimension overflows");
        value = value * 10 + digit;
      }
      dims.push_back(value);
      skip_space();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ')') {
        fail("expected ',' or ')' in shape");
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

TensorFormatError::TensorFormatError(Kind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

const char* to_string(TensorFormatError::Kind kind) {
  switch (kind) {
    case Kind::Io: return "io error";
    case Kind::BadMagic: return "bad magic";
    case Kind::UnsupportedVersion: return "unsupported version";
    case Kind::MalformedHeader: return "malformed header";
    case Kind::UnsupportedDtype: return "unsupported dtype";
    case Kind::UnsupportedOrder: return "unsupported order";
    case Kind::TruncatedPayload: return "truncated payload";
    case Kind::TrailingData: return "trailing data";
  }
  return "unknown";
}

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t total = 1;
  for (std::size_t dim : shape) {
    if (dim != 0 && total > std::numeric_limits<std::size_t>::max() / dim) {
      throw TensorFormatError(Kind::MalformedHeader, "shape product overflows");
    }
    total *= dim;
  }
  return total;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_product(shape) != data.size()) {
    throw InvalidInput("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_literal(shape));
  }
}

std::size_t Tensor::element_count() const { return shape_product(shape); }

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw InvalidInput("tensor data length does not match its shape");
  }
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " +
                       shape_literal(tensor.shape) + ", }";
  const std::size_t unpadded = kPreambleSize + header.size() + 1;
  header.append((kAlignment - unpadded % kAlignment) % kAlignment, ' ');
  header.push_back('\n');
  if (header.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidInput("tensor rank too large for a version 1.0 header");
  }

  std::vector<std::uint8_t> out;
  out.reserve(kPreambleSize + header.size() + tensor.data.size() * 4);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(1);
  out.push_back(0);
  const auto header_len = static_cast<std::uint16_t>(header.size());
  out.push_back(static_cast<std::uint8_t>(header_len & 0xff));
  out.push_back(static_cast<std::uint8_t>(header_len >> 8));
  out.insert(out.end(), header.begin(), header.end());
  for (float value : tensor.data) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw TensorFormatError(Kind::BadMagic, "not an NPY file");
  }
  if (bytes.size() < kPreambleSize) throw TensorFormatError(Kind::MalformedHeader, "file too short");
  if (bytes[6] != 1 || bytes[7] != 0) {
    throw TensorFormatError(Kind::UnsupportedVersion,
                            "version " + std::to_string(bytes[6]) + "." + std::to_string(bytes[7]) +
                                " (only 1.0 is supported)");
  }
  const std::size_t header_len = static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8);
  if (bytes.size() < kPreambleSize + header_len) {
    throw TensorFormatError(Kind::MalformedHeader, "header length exceeds file size");
  }
  std::string_view header(reinterpret_cast<const char*>(bytes.data() + kPreambleSize), header_len);
  if (header.empty() || header.back() != '\n') {
    throw TensorFormatError(Kind::MalformedHeader, "header is not newline-terminated");
  }
  const auto fields = HeaderParser(header).parse();
  if (!fields.descr || !fields.fortran_order || !fields.shape) {
    throw TensorFormatError(Kind::MalformedHeader, "header must define descr, fortran_order and shape");
  }
  if (*fields.descr != "<f4") {
    throw TensorFormatError(Kind::UnsupportedDtype, "dtype '" + *fields.descr + "' (only '<f4')");
  }
  if (*fields.fortran_order) {
    throw TensorFormatError(Kind::UnsupportedOrder, "Fortran order (only C order)");
  }

  Tensor tensor;
  tensor.shape = *fields.shape;
  const std::size_t count = shape_product(tensor.shape);
  const std::size_t offset = kPreambleSize + header_len;
  const std::size_t available = bytes.size() - offset;
  if (count > available / 4) {
    throw TensorFormatError(Kind::TruncatedPayload, "expected " + std::to_string(count * 4) +
                                                        " payload bytes, found " + std::to_string(available));
  }
  if (available != count * 4) {
    throw TensorFormatError(Kind::TrailingData, std::to_string(available - count * 4) +
                                                    " bytes after the payload");
  }
  tensor.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + offset + 4 * i;
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    tensor.data[i] = std::bit_cast<float>(bits);
  }
  return tensor;
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFormatError(Kind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorFormatError(Kind::Io, "failed writing '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFormatError(Kind::Io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), {}};
  return decode_tensor(bytes);
}

}  // namespace layerpool
