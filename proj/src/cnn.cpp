#include "layerpool/cnn.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

namespace layerpool {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::FlattenFc: return "flatten-fc";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "conv") return LayerKind::Conv;
  if (text == "relu") return LayerKind::Relu;
  if (text == "maxpool") return LayerKind::MaxPool;
  if (text == "flatten-fc") return LayerKind::FlattenFc;
  throw InvalidInput("unknown layer kind '" + std::string(text) + "'");
}

LayerSpec LayerSpec::conv(std::string name, Index in_channels, Index out_channels, Index kernel,
                          Index stride, Index padding) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
    throw InvalidInput("invalid conv layer parameters for '" + name + "'");
  }
  LayerSpec layer;
  layer.name = std::move(name);
  layer.kind = LayerKind::Conv;
  layer.kernel_size = kernel;
  layer.stride = stride;
  layer.padding = padding;
  layer.out_channels = out_channels;
  layer.weights = Eigen::MatrixXd::Zero(out_channels, in_channels * kernel * kernel);
  layer.bias = Eigen::VectorXd::Zero(out_channels);
  return layer;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec layer;
  layer.name = std::move(name);
  layer.kind = LayerKind::Relu;
  return layer;
}

LayerSpec LayerSpec::maxpool(std::string name, Index kernel, Index stride, Index padding) {
  if (kernel <= 0 || stride <= 0 || padding < 0 || padding >= kernel) {
    throw InvalidInput("invalid maxpool layer parameters for '" + name + "'");
  }
  LayerSpec layer;
  layer.name = std::move(name);
  layer.kind = LayerKind::MaxPool;
  layer.kernel_size = kernel;
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

LayerSpec LayerSpec::flatten_fc(std::string name, Index in_channels, Index out_channels,
                                Index kernel) {
  LayerSpec layer = conv(std::move(name), in_channels, out_channels, kernel, 1, 0);
  layer.kind = LayerKind::FlattenFc;
  return layer;
}

Index LayerSpec::in_channels() const {
  if (!has_weights()) return 0;
  return weights.cols() / (kernel_size * kernel_size);
}

Index window_output_extent(Index in, Index kernel, Index stride, Index padding) {
  const Index span = in + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace {

void check_window(const FeatureMap<double>& input, const LayerSpec& layer) {
  if (window_output_extent(input.width(), layer.kernel_size, layer.stride, layer.padding) < 1 ||
      window_output_extent(input.height(), layer.kernel_size, layer.stride, layer.padding) < 1) {
    throw InvalidInput("layer '" + layer.name + "': " + std::to_string(layer.kernel_size) + "x" +
                       std::to_string(layer.kernel_size) + " window does not fit input " +
                       input.shape_string() + " with padding " + std::to_string(layer.padding));
  }
}

}  // namespace

FeatureMap<double> conv2d(const FeatureMap<double>& input, const LayerSpec& layer) {
  if (!layer.has_weights()) {
    throw InvalidInput("layer '" + layer.name + "' is not a convolution");
  }
  const Index k = layer.kernel_size;
  if (layer.weights.rows() != layer.out_channels || layer.weights.cols() % (k * k) != 0 ||
      layer.bias.size() != layer.out_channels) {
    throw InvalidInput("layer '" + layer.name + "' has inconsistent weight or bias sizes");
  }
  if (layer.in_channels() != input.channels()) {
    throw InvalidInput("layer '" + layer.name + "' expects " + std::to_string(layer.in_channels()) +
                       " input channels, got " + std::to_string(input.channels()));
  }
  check_window(input, layer);

  const Index out_w = window_output_extent(input.width(), k, layer.stride, layer.padding);
  const Index out_h = window_output_extent(input.height(), k, layer.stride, layer.padding);
  const Index in_w = input.width();
  const Index in_h = input.height();

  // im2col: one column per output cell, one row per (channel, ky, kx) tap.
  Eigen::MatrixXd columns = Eigen::MatrixXd::Zero(input.channels() * k * k, out_w * out_h);
  for (Index c = 0; c < input.channels(); ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * layer.stride - layer.padding + ky;
          if (iy < 0 || iy >= in_h) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * layer.stride - layer.padding + kx;
            if (ix < 0 || ix >= in_w) continue;
            columns(row, oy * out_w + ox) = input(c, iy, ix);
          }
        }
      }
    }
  }

  CellMatrix<double> out = layer.weights * columns;
  out.colwise() += layer.bias;
  return FeatureMap<double>(out_w, out_h, layer.out_channels, std::move(out), layer.name);
}

FeatureMap<double> relu(const FeatureMap<double>& map) {
  return FeatureMap<double>(map.width(), map.height(), map.channels(), map.data().cwiseMax(0.0),
                            map.layer_name());
}

FeatureMap<double> maxpool2d(const FeatureMap<double>& map, const LayerSpec& layer) {
  if (layer.kind != LayerKind::MaxPool) {
    throw InvalidInput("layer '" + layer.name + "' is not a maxpool");
  }
  check_window(map, layer);
  const Index k = layer.kernel_size;
  const Index out_w = window_output_extent(map.width(), k, layer.stride, layer.padding);
  const Index out_h = window_output_extent(map.height(), k, layer.stride, layer.padding);

  CellMatrix<double> out(map.channels(), out_w * out_h);
  for (Index c = 0; c < map.channels(); ++c) {
    for (Index oy = 0; oy < out_h; ++oy) {
      const Index y0 = std::max<Index>(oy * layer.stride - layer.padding, 0);
      const Index y1 = std::min(oy * layer.stride - layer.padding + k, map.height());
      for (Index ox = 0; ox < out_w; ++ox) {
        const Index x0 = std::max<Index>(ox * layer.stride - layer.padding, 0);
        const Index x1 = std::min(ox * layer.stride - layer.padding + k, map.width());
        double best = -std::numeric_limits<double>::infinity();
        for (Index y = y0; y < y1; ++y) {
          for (Index x = x0; x < x1; ++x) best = std::max(best, map(c, y, x));
        }
        out(c, oy * out_w + ox) = best;
      }
    }
  }
  return FeatureMap<double>(out_w, out_h, map.channels(), std::move(out), layer.name);
}

FeatureMap<double> apply_layer(const FeatureMap<double>& input, const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Conv:
    case LayerKind::FlattenFc:
      return conv2d(input, layer);
    case LayerKind::Relu:
      return relu(input).renamed(layer.name);
    case LayerKind::MaxPool:
      return maxpool2d(input, layer);
  }
  throw InvalidInput("unknown layer kind");
}

NetworkSpec::NetworkSpec(Index input_channels, std::vector<LayerSpec> layers,
                         std::vector<std::string> tap_points)
    : input_channels_(input_channels), layers_(std::move(layers)),
      tap_points_(std::move(tap_points)) {
  if (input_channels_ <= 0) throw InvalidInput("network input channels must be positive");
  if (layers_.empty()) throw InvalidInput("network has no layers");
  std::set<std::string> names;
  Index channels = input_channels_;
  for (const auto& layer : layers_) {
    if (layer.name.empty() || !names.insert(layer.name).second) {
      throw InvalidInput("layer names must be unique and non-empty ('" + layer.name + "')");
    }
    if (layer.kernel_size <= 0 || layer.stride <= 0 || layer.padding < 0) {
      throw InvalidInput("layer '" + layer.name + "' has invalid window parameters");
    }
    if (layer.has_weights()) {
      const Index k = layer.kernel_size;
      if (layer.weights.rows() != layer.out_channels ||
          layer.weights.cols() != channels * k * k || layer.bias.size() != layer.out_channels) {
        throw InvalidInput("layer '" + layer.name + "': expected " +
                           std::to_string(layer.out_channels) + "x" +
                           std::to_string(channels * k * k) + " weights and " +
                           std::to_string(layer.out_channels) + " biases");
      }
      if (layer.kind == LayerKind::FlattenFc && (layer.stride != 1 || layer.padding != 0)) {
        throw InvalidInput("flatten-fc layer '" + layer.name + "' must use stride 1, padding 0");
      }
      channels = layer.out_channels;
    } else if (layer.kind == LayerKind::MaxPool && layer.padding >= layer.kernel_size) {
      throw InvalidInput("maxpool layer '" + layer.name + "' padding must be below its kernel");
    }
  }
  if (tap_points_.empty()) throw InvalidInput("network has no tap points");
  std::set<std::string> seen;
  for (const auto& tap : tap_points_) {
    if (!names.count(tap)) throw InvalidInput("tap point '" + tap + "' is not a layer name");
    if (!seen.insert(tap).second) throw InvalidInput("duplicate tap point '" + tap + "'");
  }
}

std::vector<Index> NetworkSpec::tap_channels() const {
  std::map<std::string, Index> by_name;
  Index channels = input_channels_;
  for (const auto& layer : layers_) {
    if (layer.has_weights()) channels = layer.out_channels;
    by_name[layer.name] = channels;
  }
  std::vector<Index> out;
  for (const auto& tap : tap_points_) out.push_back(by_name.at(tap));
  return out;
}

void NetworkSpec::initialize(std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  auto uniform = [&engine] {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53 - 0.5;
  };
  for (auto& layer : layers_) {
    if (!layer.has_weights()) continue;
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      for (Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = uniform();
    }
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = uniform();
  }
  seed_ = seed;
}

TapMaps forward(const FeatureMap<double>& input, const NetworkSpec& net) {
  if (input.channels() != net.input_channels()) {
    throw InvalidInput("network expects " + std::to_string(net.input_channels()) +
                       " input channels, got " + std::to_string(input.channels()));
  }
  const std::set<std::string> taps(net.tap_points().begin(), net.tap_points().end());
  TapMaps out;
  FeatureMap<double> current = input;
  for (const auto& layer : net.layers()) {
    current = apply_layer(current, layer);
    if (taps.count(layer.name)) out.emplace(layer.name, current);
  }
  return out;
}

TapMaps forward(const ImageRaster& image, const NetworkSpec& net) {
  return forward(image.to_feature_map(), net);
}

NetworkSpec default_toy_network(std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  Index channels = 3;
  int block = 1;
  for (Index width : {4, 8, 16}) {
    const std::string prefix = "conv" + std::to_string(block++);
    layers.push_back(LayerSpec::conv(prefix + ".conv", channels, width, 3, 1, 1));
    layers.push_back(LayerSpec::relu(prefix + ".relu"));
    layers.push_back(LayerSpec::maxpool(prefix, 2, 2));
    channels = width;
  }
  layers.push_back(LayerSpec::flatten_fc("fc.linear", channels, 32, 4));
  layers.push_back(LayerSpec::relu("fc"));
  NetworkSpec net(3, std::move(layers), {"conv1", "conv2", "conv3", "fc"});
  net.initialize(seed);
  return net;
}

nlohmann::json network_to_json(const NetworkSpec& net, bool include_weights) {
  if (!include_weights && !net.seed()) {
    throw InvalidInput("network weights were not seeded; they must be serialized explicitly");
  }
  nlohmann::json doc;
  doc["input_channels"] = net.input_channels();
  doc["tap_points"] = net.tap_points();
  if (net.seed()) doc["seed"] = *net.seed();
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::json entry{{"name", layer.name}, {"kind", std::string(to_string(layer.kind))}};
    if (layer.kind != LayerKind::Relu) {
      entry["kernel_size"] = layer.kernel_size;
      entry["stride"] = layer.stride;
      entry["padding"] = layer.padding;
    }
    if (layer.has_weights()) {
      entry["out_channels"] = layer.out_channels;
      if (include_weights) {
        std::vector<double> weights;
        weights.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Index r = 0; r < layer.weights.rows(); ++r) {
          for (Index c = 0; c < layer.weights.cols(); ++c) weights.push_back(layer.weights(r, c));
        }
        entry["weights"] = weights;
        entry["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
      }
    }
    doc["layers"].push_back(std::move(entry));
  }
  return doc;
}

NetworkSpec network_from_json(const nlohmann::json& doc) {
  try {
    const Index input_channels = doc.at("input_channels").get<Index>();
    Index channels = input_channels;
    bool all_explicit = true;
    bool any_explicit = false;
    std::vector<LayerSpec> layers;
    for (const auto& entry : doc.at("layers")) {
      const std::string name = entry.at("name").get<std::string>();
      const LayerKind kind = parse_layer_kind(entry.at("kind").get<std::string>());
      LayerSpec layer;
      switch (kind) {
        case LayerKind::Relu:
          layer = LayerSpec::relu(name);
          break;
        case LayerKind::MaxPool:
          layer = LayerSpec::maxpool(name, entry.at("kernel_size").get<Index>(),
                                     entry.value("stride", entry.at("kernel_size").get<Index>()),
                                     entry.value("padding", Index{0}));
          break;
        case LayerKind::Conv:
          layer = LayerSpec::conv(name, channels, entry.at("out_channels").get<Index>(),
                                  entry.at("kernel_size").get<Index>(), entry.value("stride", Index{1}),
                                  entry.value("padding", Index{0}));
          break;
        case LayerKind::FlattenFc:
          layer = LayerSpec::flatten_fc(name, channels, entry.at("out_channels").get<Index>(),
                                        entry.at("kernel_size").get<Index>());
          break;
      }
      if (layer.has_weights()) {
        if (entry.contains("weights")) {
          any_explicit = true;
          const auto weights = entry.at("weights").get<std::vector<double>>();
          const auto bias = entry.at("bias").get<std::vector<double>>();
          if (static_cast<Index>(weights.size()) != layer.weights.size() ||
              static_cast<Index>(bias.size()) != layer.bias.size()) {
            throw InvalidInput("layer '" + name + "' weight/bias count does not match its shape");
          }
          std::size_t i = 0;
          for (Index r = 0; r < layer.weights.rows(); ++r) {
            for (Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = weights[i++];
          }
          for (Index b = 0; b < layer.bias.size(); ++b) layer.bias[b] = bias[static_cast<std::size_t>(b)];
        } else {
          all_explicit = false;
        }
        channels = layer.out_channels;
      }
      layers.push_back(std::move(layer));
    }
    NetworkSpec net(input_channels, std::move(layers),
                    doc.at("tap_points").get<std::vector<std::string>>());
    if (!all_explicit) {
      if (any_explicit || !doc.contains("seed")) {
        throw InvalidInput("network JSON must give weights for every layer or a seed for all");
      }
      net.initialize(doc.at("seed").get<std::uint64_t>());
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed network JSON: ") + e.what());
  }
}

}  // namespace layerpool
