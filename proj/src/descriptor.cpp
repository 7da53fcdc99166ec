#include "layerpool/descriptor.hpp"

#include <fstream>

namespace layerpool {

void PipelineConfig::validate() const {
  if (layers.empty()) throw InvalidInput("pipeline config lists no layers");
  if (!fuse && layers.size() != 1) {
    throw InvalidInput("a non-fused pipeline takes exactly one layer, got " +
                       std::to_string(layers.size()));
  }
}

DescriptorVector<double> layer_descriptor(const FeatureMap<double>& map, PoolingMode mode) {
  return sqrt_l2_normalize(pool(map, mode));
}

DescriptorVector<double> fuse_concat(std::span<const DescriptorVector<double>> parts) {
  if (parts.empty()) throw InvalidInput("cannot fuse an empty descriptor list");
  Index total = 0;
  for (const auto& part : parts) {
    if (!part.normalized()) throw InvalidInput("fuse_concat expects normalized per-layer descriptors");
    total += part.dim();
  }
  Vector<double> joined(total);
  Index offset = 0;
  for (const auto& part : parts) {
    joined.segment(offset, part.dim()) = part.values();
    offset += part.dim();
  }
  return l2_normalize(DescriptorVector<double>(std::move(joined)));
}

DescriptorVector<double> describe_maps(const TapMaps& maps, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<DescriptorVector<double>> parts;
  parts.reserve(cfg.layers.size());
  for (const auto& layer : cfg.layers) {
    const auto it = maps.find(layer);
    if (it == maps.end()) throw InvalidInput("no feature map for layer '" + layer + "'");
    parts.push_back(layer_descriptor(it->second, cfg.pooling));
  }
  if (!cfg.fuse) return parts.front();
  return fuse_concat(parts);
}

DescriptorVector<double> describe(const ImageRaster& image, const NetworkSpec& net,
                                  const PipelineConfig& cfg, const ScalePlan& plan) {
  cfg.validate();
  const ImageRaster resized = bilinear_resize(image, target_dims(image.size(), plan));
  return describe_maps(forward(resized, net), cfg);
}

Index ChannelTable::channels(std::string_view layer) const {
  for (const auto& [name, count] : layers) {
    if (name == layer) return count;
  }
  throw InvalidInput("layer '" + std::string(layer) + "' is not in the " + model + " channel table");
}

std::vector<std::string> ChannelTable::layer_names() const {
  std::vector<std::string> names;
  for (const auto& entry : layers) names.push_back(entry.first);
  return names;
}

const ChannelTable& alexnet_channel_table() {
  static const ChannelTable table{"alexnet",
                                  {{"conv1", 96}, {"conv2", 256}, {"conv3", 384}, {"conv4", 384},
                                   {"conv5", 256}, {"fc6", 4096}, {"fc7", 4096}}};
  return table;
}

const ChannelTable& vgg19_channel_table() {
  static const ChannelTable table{"vgg19",
                                  {{"conv1", 64}, {"conv2", 128}, {"conv3", 256}, {"conv4", 512},
                                   {"conv5", 512}, {"fc6", 4096}, {"fc7", 4096}}};
  return table;
}

ChannelTable channel_table(std::string_view model) {
  if (model == "alexnet") return alexnet_channel_table();
  if (model == "vgg19" || model == "vgg") return vgg19_channel_table();
  if (model == "toy") {
    const NetworkSpec net = default_toy_network();
    ChannelTable table{"toy", {}};
    const auto channels = net.tap_channels();
    for (std::size_t i = 0; i < channels.size(); ++i) {
      table.layers.emplace_back(net.tap_points()[i], channels[i]);
    }
    return table;
  }
  throw InvalidInput("no channel table for model '" + std::string(model) + "'");
}

Index fused_dimension(const ChannelTable& table, std::span<const std::string> layers) {
  Index total = 0;
  if (layers.empty()) {
    for (const auto& entry : table.layers) total += entry.second;
    return total;
  }
  for (const auto& layer : layers) total += table.channels(layer);
  return total;
}

std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path) {
  return std::filesystem::path(tensor_path.string() + ".json");
}

void save_descriptor_set(const DescriptorSet& set, const std::filesystem::path& path) {
  if (static_cast<Index>(set.ids.size()) != set.size()) {
    throw InvalidInput("descriptor set has " + std::to_string(set.ids.size()) + " ids for " +
                       std::to_string(set.size()) + " rows");
  }
  std::vector<float> values(static_cast<std::size_t>(set.rows.size()));
  for (Index r = 0; r < set.rows.rows(); ++r) {
    for (Index c = 0; c < set.rows.cols(); ++c) {
      values[static_cast<std::size_t>(r * set.rows.cols() + c)] = static_cast<float>(set.rows(r, c));
    }
  }
  write_tensor(Tensor({static_cast<std::size_t>(set.size()), static_cast<std::size_t>(set.dim())},
                      std::move(values)),
               path);
  nlohmann::json sidecar{{"ids", set.ids},
                         {"dim", set.dim()},
                         {"config", set.config},
                         {"fingerprint", set.fingerprint}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw InvalidInput("cannot write '" + sidecar_path(path).string() + "'");
  out << sidecar.dump(2) << '\n';
}

DescriptorSet load_descriptor_set(const std::filesystem::path& path) {
  const Tensor tensor = read_tensor(path);
  if (tensor.shape.size() != 2) {
    throw InvalidInput("descriptor file '" + path.string() + "' must hold a 2-D array");
  }
  std::ifstream in(sidecar_path(path));
  if (!in) throw InvalidInput("missing descriptor sidecar '" + sidecar_path(path).string() + "'");
  nlohmann::json sidecar;
  try {
    in >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed descriptor sidecar: " + std::string(e.what()));
  }

  DescriptorSet set;
  const auto n = static_cast<Index>(tensor.shape[0]);
  const auto dim = static_cast<Index>(tensor.shape[1]);
  set.rows = Eigen::Map<const CellMatrix<float>>(tensor.data.data(), n, dim).cast<double>();
  set.ids = sidecar.at("ids").get<std::vector<std::string>>();
  set.config = sidecar.value("config", nlohmann::json::object());
  set.fingerprint = sidecar.value("fingerprint", std::string{});
  if (static_cast<Index>(set.ids.size()) != n) {
    throw InvalidInput("descriptor sidecar lists " + std::to_string(set.ids.size()) + " ids for " +
                       std::to_string(n) + " rows");
  }
  return set;
}

FeatureMap<double> feature_map_from_tensor(const Tensor& tensor, std::string layer_name) {
  std::size_t channels = 0, height = 1, width = 1;
  if (tensor.shape.size() == 3) {
    channels = tensor.shape[0];
    height = tensor.shape[1];
    width = tensor.shape[2];
  } else if (tensor.shape.size() == 1) {
    channels = tensor.shape[0];
  } else {
    throw InvalidInput("feature tensors must have shape (channels, height, width) or (channels,)");
  }
  const auto c = static_cast<Index>(channels);
  const auto cells = static_cast<Index>(height * width);
  CellMatrix<double> data = Eigen::Map<const CellMatrix<float>>(tensor.data.data(), c, cells).cast<double>();
  return FeatureMap<double>(static_cast<Index>(width), static_cast<Index>(height), c, std::move(data),
                            std::move(layer_name));
}

}  // namespace layerpool
