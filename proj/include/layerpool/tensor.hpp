#pragma once

/**
 * @file tensor.hpp
 *
 * @brief Activation tensors and the global pooling / normalization primitives.
 *
 * A feature map of `width x height x channels` is stored as a row-major
 * `channels x (height * width)` matrix: row `c` holds channel `c`, and the
 * cell at (row `y`, column `x`) sits at column `y * width + x`. Global pooling
 * is then a per-row reduction and every routine accepts any Eigen expression
 * with that shape.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layerpool/error.hpp"

namespace layerpool {

using Index = Eigen::Index;

template <typename Scalar>
using CellMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/**
 * @brief The activations of one image at one layer.
 *
 * Immutable once built. Construction rejects non-positive extents, a data
 * block whose shape disagrees with the extents, and non-finite values.
 */
template <typename Scalar = double>
class FeatureMap {
 public:
  using Storage = CellMatrix<Scalar>;

  FeatureMap(Index width, Index height, Index channels, Storage data, std::string layer_name = {})
      : width_(width), height_(height), channels_(channels), data_(std::move(data)),
        layer_name_(std::move(layer_name)) {
    if (width_ <= 0 || height_ <= 0 || channels_ <= 0) {
      throw InvalidInput("feature map extents must be positive, got " + shape_string());
    }
    if (data_.rows() != channels_ || data_.cols() != width_ * height_) {
      throw InvalidInput("feature map data does not match shape " + shape_string());
    }
    if (!data_.allFinite()) {
      throw InvalidInput("feature map '" + layer_name_ + "' contains non-finite values");
    }
  }

  /// Copies `values`, laid out as (channel, row, column) with column fastest.
  static FeatureMap from_values(Index width, Index height, Index channels,
                                std::span<const Scalar> values, std::string layer_name = {}) {
    if (width <= 0 || height <= 0 || channels <= 0 ||
        static_cast<Index>(values.size()) != width * height * channels) {
      throw InvalidInput("value count does not match feature map shape");
    }
    Storage data = Eigen::Map<const Storage>(values.data(), channels, width * height);
    return FeatureMap(width, height, channels, std::move(data), std::move(layer_name));
  }

  static FeatureMap constant(Index width, Index height, Index channels, Scalar value,
                             std::string layer_name = {}) {
    if (width <= 0 || height <= 0 || channels <= 0) {
      throw InvalidInput("feature map extents must be positive");
    }
    return FeatureMap(width, height, channels, Storage::Constant(channels, width * height, value),
                      std::move(layer_name));
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index channels() const { return channels_; }
  Index spatial_size() const { return width_ * height_; }
  Index size() const { return data_.size(); }

  Scalar operator()(Index channel, Index row, Index col) const {
    return data_(channel, row * width_ + col);
  }

  const Storage& data() const { return data_; }
  const std::string& layer_name() const { return layer_name_; }

  FeatureMap renamed(std::string name) const {
    return FeatureMap(width_, height_, channels_, data_, std::move(name));
  }

  template <typename Other>
  FeatureMap<Other> cast() const {
    return FeatureMap<Other>(width_, height_, channels_, data_.template cast<Other>(), layer_name_);
  }

  std::string shape_string() const {
    return std::to_string(width_) + "x" + std::to_string(height_) + "x" + std::to_string(channels_);
  }

 private:
  Index width_;
  Index height_;
  Index channels_;
  Storage data_;
  std::string layer_name_;
};

/// A pooled (and possibly normalized) descriptor. `normalized` records whether
/// an l2 step has been applied to the current values.
template <typename Scalar = double>
class DescriptorVector {
 public:
  DescriptorVector() = default;
  explicit DescriptorVector(Vector<Scalar> values, bool normalized = false)
      : values_(std::move(values)), normalized_(normalized) {}

  const Vector<Scalar>& values() const { return values_; }
  Index dim() const { return values_.size(); }
  bool normalized() const { return normalized_; }
  Scalar operator[](Index i) const { return values_[i]; }

 private:
  Vector<Scalar> values_;
  bool normalized_ = false;
};

enum class PoolingMode { Average, Max };

inline std::string_view to_string(PoolingMode mode) {
  return mode == PoolingMode::Average ? "avg" : "max";
}

inline PoolingMode parse_pooling_mode(std::string_view text) {
  if (text == "avg" || text == "average") return PoolingMode::Average;
  if (text == "max") return PoolingMode::Max;
  throw InvalidInput("unknown pooling mode '" + std::string(text) + "' (expected avg or max)");
}

/**
 * Per-row mean of a `channels x cells` expression.
 *
 * Each row is summed over its values in ascending order, so the result only
 * depends on the multiset of cell values: permuting spatial cells (a cyclic
 * shift, a flip) leaves every bit of the mean unchanged.
 */
template <typename Derived>
Vector<typename Derived::Scalar> channel_means(const Eigen::MatrixBase<Derived>& cells) {
  using Scalar = typename Derived::Scalar;
  const Index count = cells.cols();
  if (count == 0) {
    throw InvalidInput("cannot pool over a zero-sized spatial extent");
  }
  Vector<Scalar> out(cells.rows());
  std::vector<Scalar> row(static_cast<std::size_t>(count));
  for (Index c = 0; c < cells.rows(); ++c) {
    for (Index i = 0; i < count; ++i) row[static_cast<std::size_t>(i)] = cells(c, i);
    std::sort(row.begin(), row.end());
    out[c] = std::accumulate(row.begin(), row.end(), Scalar(0)) / static_cast<Scalar>(count);
  }
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> channel_maxima(const Eigen::MatrixBase<Derived>& cells) {
  if (cells.cols() == 0) {
    throw InvalidInput("cannot pool over a zero-sized spatial extent");
  }
  return cells.rowwise().maxCoeff();
}

/// Global average pooling: one mean per channel.
template <typename Scalar>
DescriptorVector<Scalar> avg_pool(const FeatureMap<Scalar>& map) {
  return DescriptorVector<Scalar>(channel_means(map.data()));
}

/// Global max pooling: one maximum per channel.
template <typename Scalar>
DescriptorVector<Scalar> max_pool(const FeatureMap<Scalar>& map) {
  return DescriptorVector<Scalar>(channel_maxima(map.data()));
}

template <typename Scalar>
DescriptorVector<Scalar> pool(const FeatureMap<Scalar>& map, PoolingMode mode) {
  return mode == PoolingMode::Average ? avg_pool(map) : max_pool(map);
}

/// Scales to unit Euclidean norm. The zero vector is returned as is (flagged normalized).
template <typename Scalar>
DescriptorVector<Scalar> l2_normalize(const DescriptorVector<Scalar>& v) {
  const Scalar norm = v.values().norm();
  if (norm == Scalar(0)) {
    return DescriptorVector<Scalar>(v.values(), true);
  }
  return DescriptorVector<Scalar>(v.values() / norm, true);
}

/// sign(x) * sqrt(|x|) per component.
template <typename Derived>
auto signed_sqrt(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](typename Derived::Scalar value) {
    using std::sqrt;
    using std::abs;
    using Scalar = typename Derived::Scalar;
    const Scalar root = sqrt(abs(value));
    return value < Scalar(0) ? -root : root;
  });
}

/// Root normalization: signed square root of every component, then l2.
template <typename Scalar>
DescriptorVector<Scalar> sqrt_l2_normalize(const DescriptorVector<Scalar>& v) {
  Vector<Scalar> rooted = signed_sqrt(v.values());
  return l2_normalize(DescriptorVector<Scalar>(std::move(rooted)));
}

}  // namespace layerpool
