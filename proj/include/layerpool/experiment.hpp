#pragma once

/**
 * @file experiment.hpp
 *
 * @brief Run configurations, dataset loading and the layer x scale x pooling
 * sweep runner.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "layerpool/classify.hpp"
#include "layerpool/cnn.hpp"
#include "layerpool/descriptor.hpp"
#include "layerpool/manifest.hpp"
#include "layerpool/report.hpp"
#include "layerpool/resize.hpp"

namespace layerpool {

enum class Task { Search, Classify };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct NetworkSource {
  enum class Kind { ToySeed, NetworkJson, TensorDir };
  Kind kind = Kind::ToySeed;
  std::uint64_t seed = 0;
  std::filesystem::path path;  ///< network JSON file or tensor directory
};

/**
 * @brief Everything that determines an experiment's numbers.
 *
 * `fusion_weights` non-empty selects score-level late fusion across the
 * listed layers (search only, one weight per layer); otherwise `fuse`
 * selects descriptor concatenation.
 */
struct RunConfig {
  NetworkSource network;
  std::vector<std::string> layers;
  PoolingMode pooling = PoolingMode::Average;
  bool fuse = false;
  ScalePlan plan{0, 1.0};
  /// Split whose image sizes set scale 1.0 when plan.scale1_long_side is 0.
  std::string scale_split = "all";
  std::vector<double> fusion_weights;
  std::filesystem::path manifest;
  Task task = Task::Search;
  SplitSpec split;
  KnnConfig knn;
  std::filesystem::path output;

  /// Referenced files exist and the layer/weight combination is consistent.
  void validate() const;
  PipelineConfig pipeline() const;

  nlohmann::json to_json(bool include_outputs = true) const;
  static RunConfig from_json(const nlohmann::json& doc);
  /// FNV-1a 64 of the sorted-key JSON without output paths, as 16 hex digits.
  std::string fingerprint() const;
};

std::string fingerprint_json(const nlohmann::json& doc);

/// Images (decoded, in manifest order) or precomputed tap maps per image.
struct Dataset {
  DatasetManifest manifest;
  std::vector<ImageRaster> images;
  std::vector<TapMaps> maps;
  std::vector<std::string> tap_order;  ///< forward order of the precomputed taps
  std::optional<ScalePlan> maps_plan;
};

Dataset load_images(DatasetManifest manifest);

/**
 * Reads `<dir>/manifest.json`:
 *
 *     {"model": "vgg19", "taps": ["conv1", ...],
 *      "scale_plan": {"scale1_long_side": 1024, "scale": 1.0},
 *      "files": [{"image_id": "a", "tap": "conv1", "path": "a__conv1.npy",
 *                 "shape": [64, 384, 512]}, ...]}
 *
 * Each file is a (channels, height, width) float32 tensor. Every image of the
 * dataset needs every listed tap.
 */
Dataset load_tensor_dir(DatasetManifest manifest, const std::filesystem::path& dir);

/// A network, the dataset and a base config that cells are derived from.
struct Experiment {
  Dataset dataset;
  std::optional<NetworkSpec> net;  ///< absent for tensor-directory datasets
  RunConfig base;

  /// Tap names in forward order.
  std::vector<std::string> available_layers() const;
};

Experiment make_experiment(const RunConfig& config);

/// One descriptor per dataset image under `config`.
DescriptorSet extract_descriptors(const Experiment& experiment, const RunConfig& config);
/// Per-layer descriptor sets (no fusion) for late fusion.
std::vector<DescriptorSet> extract_layer_descriptors(const Experiment& experiment, const RunConfig& config);

EvalReport evaluate(const Experiment& experiment, const RunConfig& config);

std::string describe_config(const RunConfig& config);

struct SweepCell {
  std::string layer;  ///< a tap name, "a+b" for a fused cell, or "all"
  double scale = 1.0;
  PoolingMode pooling = PoolingMode::Average;
};

struct SweepGrid {
  std::vector<std::string> layers;
  std::vector<double> scales;
  std::vector<PoolingMode> poolings;

  std::vector<SweepCell> cells() const;
  static SweepGrid from_json(const nlohmann::json& doc);
};

/// `base` with the cell's layers, fuse flag, pooling and scale substituted.
RunConfig cell_config(const Experiment& experiment, const SweepCell& cell);

struct CellOutcome {
  SweepCell cell;
  std::optional<EvalReport> report;
  std::string error;
};

/// Every cell is attempted; failures are recorded in CellOutcome::error.
std::vector<CellOutcome> run_sweep(const Experiment& experiment, const SweepGrid& grid);

/// Header `layer,scale,pooling,metric,value` and one row per successful cell.
std::string sweep_csv(std::span<const CellOutcome> outcomes);

/// Writes cells/NNN.json, summary.csv and failures.json under `dir`.
/// Returns 0 when every cell succeeded, 2 otherwise.
int write_sweep(std::span<const CellOutcome> outcomes, const std::filesystem::path& dir);

}  // namespace layerpool
