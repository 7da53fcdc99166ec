#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "layerpool/image.hpp"
#include "layerpool/retrieval.hpp"

namespace layerpool {

struct ImageEntry {
  std::string id;
  std::filesystem::path path;  ///< resolved against the manifest directory; may be empty
  ImageSize size;
  std::optional<int> label;
  std::string split;  ///< free-form: "train", "test", "database", "query", ...
};

/**
 * @brief The images of one dataset plus their labels or relevance structure.
 *
 *     {"images": [{"id": "a", "path": "a.ppm", "width": 64, "height": 48,
 *                  "label": 0, "split": "train"}, ...],
 *      "class_count": 5,
 *      "queries": [...], "groups": [...], "exclude_self": false}
 *
 * The relevance keys follow RelevanceManifest and may be absent for pure
 * classification datasets.
 */
struct DatasetManifest {
  std::vector<ImageEntry> images;
  std::optional<RelevanceManifest> relevance;
  int class_count = 0;

  /// Sizes of the images whose split equals `split`; "all" selects every image.
  std::vector<ImageSize> sizes(std::string_view split = "all") const;
  std::vector<std::string> ids() const;
  /// Labels of every image; throws when any image is unlabeled.
  std::vector<int> labels() const;

  static DatasetManifest from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static DatasetManifest load(const std::filesystem::path& path);
  /// Paths are written relative to `base_dir`.
  nlohmann::json to_json(const std::filesystem::path& base_dir) const;
  void save(const std::filesystem::path& path) const;
};

}  // namespace layerpool
