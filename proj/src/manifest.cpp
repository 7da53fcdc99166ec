#include "layerpool/manifest.hpp"

#include <fstream>
#include <set>

namespace layerpool {

std::vector<ImageSize> DatasetManifest::sizes(std::string_view split) const {
  std::vector<ImageSize> out;
  for (const auto& image : images) {
    if (split == "all" || image.split == split) out.push_back(image.size);
  }
  if (out.empty()) throw InvalidInput("no images in split '" + std::string(split) + "'");
  return out;
}

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(image.id);
  return out;
}

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& image : images) {
    if (!image.label) throw InvalidInput("image '" + image.id + "' has no label");
    out.push_back(*image.label);
  }
  return out;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& doc,
                                           const std::filesystem::path& base_dir) {
  try {
    DatasetManifest manifest;
    std::set<std::string> ids;
    for (const auto& entry : doc.at("images")) {
      ImageEntry image;
      image.id = entry.at("id").get<std::string>();
      if (!ids.insert(image.id).second) throw InvalidInput("duplicate image id '" + image.id + "'");
      if (entry.contains("path")) image.path = base_dir / entry.at("path").get<std::string>();
      image.size = {entry.at("width").get<Index>(), entry.at("height").get<Index>()};
      if (image.size.width <= 0 || image.size.height <= 0) {
        throw InvalidInput("image '" + image.id + "' has non-positive dimensions");
      }
      if (entry.contains("label")) image.label = entry.at("label").get<int>();
      image.split = entry.value("split", std::string{});
      manifest.images.push_back(std::move(image));
    }
    if (manifest.images.empty()) throw InvalidInput("manifest lists no images");
    manifest.class_count = doc.value("class_count", 0);
    for (const auto& image : manifest.images) {
      if (image.label && (*image.label < 0 || (manifest.class_count > 0 && *image.label >= manifest.class_count))) {
        throw InvalidInput("image '" + image.id + "' has label outside [0, class_count)");
      }
    }
    if (doc.contains("queries") || doc.contains("groups")) {
      manifest.relevance = RelevanceManifest::from_json(doc);
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed dataset manifest: ") + e.what());
  }
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

nlohmann::json DatasetManifest::to_json(const std::filesystem::path& base_dir) const {
  nlohmann::json doc = relevance ? relevance->to_json() : nlohmann::json::object();
  auto& list = doc["images"] = nlohmann::json::array();
  for (const auto& image : images) {
    nlohmann::json entry{{"id", image.id}, {"width", image.size.width}, {"height", image.size.height}};
    if (!image.path.empty()) {
      const auto base = std::filesystem::absolute(base_dir.empty() ? "." : base_dir).lexically_normal();
      entry["path"] = std::filesystem::absolute(image.path).lexically_normal().lexically_relative(base).generic_string();
    }
    if (image.label) entry["label"] = *image.label;
    if (!image.split.empty()) entry["split"] = image.split;
    list.push_back(std::move(entry));
  }
  if (class_count > 0) doc["class_count"] = class_count;
  return doc;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write manifest '" + path.string() + "'");
  out << to_json(path.parent_path()).dump(2) << '\n';
}

}  // namespace layerpool
