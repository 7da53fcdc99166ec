#include "layerpool/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "layerpool/parallel.hpp"
#include "layerpool/retrieval.hpp"

namespace layerpool {

namespace fs = std::filesystem;

std::string_view to_string(Task task) { return task == Task::Search ? "search" : "classify"; }

Task parse_task(std::string_view text) {
  if (text == "search") return Task::Search;
  if (text == "classify") return Task::Classify;
  throw InvalidInput("unknown task '" + std::string(text) + "' (expected search or classify)");
}

void RunConfig::validate() const {
  if (manifest.empty() || !fs::exists(manifest)) {
    throw InvalidInput("manifest '" + manifest.string() + "' does not exist");
  }
  if (network.kind != NetworkSource::Kind::ToySeed && !fs::exists(network.path)) {
    throw InvalidInput("network source '" + network.path.string() + "' does not exist");
  }
  if (layers.empty()) throw InvalidInput("no layers configured");
  if (!fusion_weights.empty()) {
    if (task != Task::Search) throw InvalidInput("late fusion weights apply to search only");
    if (fusion_weights.size() != layers.size()) {
      throw InvalidInput("got " + std::to_string(fusion_weights.size()) + " fusion weights for " +
                         std::to_string(layers.size()) + " layers");
    }
  } else if (!fuse && layers.size() != 1) {
    throw InvalidInput("several layers need --fuse or --weights");
  }
  if (!(plan.scale > 0.0)) throw InvalidInput("scale must be positive");
  if (split.train_per_class < 1 || split.repeats < 1) throw InvalidInput("invalid split spec");
  if (knn.k < 1) throw InvalidInput("k-NN k must be at least 1");
}

PipelineConfig RunConfig::pipeline() const {
  return PipelineConfig{pooling, layers, fuse || layers.size() > 1};
}

nlohmann::json RunConfig::to_json(bool include_outputs) const {
  nlohmann::json net;
  switch (network.kind) {
    case NetworkSource::Kind::ToySeed:
      net = {{"source", "toy"}, {"seed", network.seed}};
      break;
    case NetworkSource::Kind::NetworkJson:
      net = {{"source", "json"}, {"path", network.path.generic_string()}};
      break;
    case NetworkSource::Kind::TensorDir:
      net = {{"source", "tensor-dir"}, {"path", network.path.generic_string()}};
      break;
  }
  nlohmann::json doc{
      {"network", net},
      {"layers", layers},
      {"pooling", std::string(to_string(pooling))},
      {"fuse", fuse},
      {"scale_plan", {{"scale1_long_side", plan.scale1_long_side}, {"scale", plan.scale}}},
      {"scale_source", scale_split},
      {"fusion_weights", fusion_weights},
      {"manifest", manifest.generic_string()},
      {"task", std::string(to_string(task))},
      {"split", {{"train_per_class", split.train_per_class}, {"repeats", split.repeats}, {"seed", split.seed}}},
      {"knn_k", knn.k},
  };
  if (include_outputs) doc["output"] = output.generic_string();
  return doc;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  try {
    RunConfig cfg;
    const auto& net = doc.at("network");
    const std::string source = net.at("source").get<std::string>();
    if (source == "toy") {
      cfg.network = {NetworkSource::Kind::ToySeed, net.value("seed", std::uint64_t{0}), {}};
    } else if (source == "json") {
      cfg.network = {NetworkSource::Kind::NetworkJson, 0, net.at("path").get<std::string>()};
    } else if (source == "tensor-dir") {
      cfg.network = {NetworkSource::Kind::TensorDir, 0, net.at("path").get<std::string>()};
    } else {
      throw InvalidInput("unknown network source '" + source + "'");
    }
    cfg.layers = doc.at("layers").get<std::vector<std::string>>();
    cfg.pooling = parse_pooling_mode(doc.value("pooling", std::string("avg")));
    cfg.fuse = doc.value("fuse", false);
    if (doc.contains("scale_plan")) {
      cfg.plan.scale1_long_side = doc["scale_plan"].value("scale1_long_side", Index{0});
      cfg.plan.scale = doc["scale_plan"].value("scale", 1.0);
    }
    cfg.scale_split = doc.value("scale_source", std::string("all"));
    cfg.fusion_weights = doc.value("fusion_weights", std::vector<double>{});
    cfg.manifest = doc.at("manifest").get<std::string>();
    cfg.task = parse_task(doc.value("task", std::string("search")));
    if (doc.contains("split")) {
      cfg.split.train_per_class = doc["split"].value("train_per_class", Index{1});
      cfg.split.repeats = doc["split"].value("repeats", 10);
      cfg.split.seed = doc["split"].value("seed", std::uint64_t{0});
    }
    cfg.knn.k = doc.value("knn_k", Index{5});
    cfg.output = doc.value("output", std::string{});
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed run config: ") + e.what());
  }
}

std::string fingerprint_json(const nlohmann::json& doc) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const std::string text = doc.dump();
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ull;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

std::string RunConfig::fingerprint() const { return fingerprint_json(to_json(false)); }

Dataset load_images(DatasetManifest manifest) {
  Dataset dataset;
  dataset.images.reserve(manifest.images.size());
  for (const auto& entry : manifest.images) {
    if (entry.path.empty()) throw InvalidInput("image '" + entry.id + "' has no path");
    ImageRaster image = decode_image(entry.path);
    if (image.size() != entry.size) {
      throw InvalidInput("image '" + entry.id + "' is " + std::to_string(image.width()) + "x" +
                         std::to_string(image.height()) + ", manifest says " +
                         std::to_string(entry.size.width) + "x" + std::to_string(entry.size.height));
    }
    dataset.images.push_back(std::move(image));
  }
  dataset.manifest = std::move(manifest);
  return dataset;
}

Dataset load_tensor_dir(DatasetManifest manifest, const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InvalidInput("tensor directory '" + dir.string() + "' has no manifest.json");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed tensor manifest: " + std::string(e.what()));
  }

  Dataset dataset;
  try {
    dataset.tap_order = doc.at("taps").get<std::vector<std::string>>();
    if (doc.contains("scale_plan")) {
      dataset.maps_plan = ScalePlan{doc["scale_plan"].at("scale1_long_side").get<Index>(),
                                    doc["scale_plan"].value("scale", 1.0)};
    }
    std::map<std::string, std::map<std::string, fs::path>> files;
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> shapes;
    for (const auto& entry : doc.at("files")) {
      const auto image_id = entry.at("image_id").get<std::string>();
      const auto tap = entry.at("tap").get<std::string>();
      files[image_id][tap] = dir / entry.at("path").get<std::string>();
      if (entry.contains("shape")) shapes[image_id][tap] = entry.at("shape").get<std::vector<std::size_t>>();
    }
    dataset.maps.resize(manifest.images.size());
    parallel_for(manifest.images.size(), [&](std::size_t i) {
      const auto& id = manifest.images[i].id;
      const auto it = files.find(id);
      if (it == files.end()) throw InvalidInput("tensor directory has no maps for image '" + id + "'");
      for (const auto& tap : dataset.tap_order) {
        const auto file = it->second.find(tap);
        if (file == it->second.end()) {
          throw InvalidInput("tensor directory lacks tap '" + tap + "' for image '" + id + "'");
        }
        const Tensor tensor = read_tensor(file->second);
        const auto declared = shapes[id].find(tap);
        if (declared != shapes[id].end() && declared->second != tensor.shape) {
          throw InvalidInput("tensor '" + file->second.string() + "' shape differs from its manifest entry");
        }
        dataset.maps[i].emplace(tap, feature_map_from_tensor(tensor, tap));
      }
    });
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed tensor manifest: " + std::string(e.what()));
  }
  dataset.manifest = std::move(manifest);
  return dataset;
}

std::vector<std::string> Experiment::available_layers() const {
  if (net) return net->tap_points();
  return dataset.tap_order;
}

Experiment make_experiment(const RunConfig& config) {
  config.validate();
  Experiment experiment;
  experiment.base = config;
  DatasetManifest manifest = DatasetManifest::load(config.manifest);

  switch (config.network.kind) {
    case NetworkSource::Kind::ToySeed:
      experiment.net = default_toy_network(config.network.seed);
      break;
    case NetworkSource::Kind::NetworkJson: {
      std::ifstream in(config.network.path);
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("malformed network JSON: " + std::string(e.what()));
      }
      experiment.net = network_from_json(doc);
      break;
    }
    case NetworkSource::Kind::TensorDir:
      break;
  }

  if (experiment.net) {
    experiment.dataset = load_images(std::move(manifest));
    for (auto& image : experiment.dataset.images) {
      image = with_channels(image, experiment.net->input_channels());
    }
    if (experiment.base.plan.scale1_long_side <= 0) {
      const auto sizes = experiment.dataset.manifest.sizes(config.scale_split);
      experiment.base.plan.scale1_long_side = compute_scale1(sizes).scale1_long_side;
    }
  } else {
    experiment.dataset = load_tensor_dir(std::move(manifest), config.network.path);
    if (experiment.dataset.maps_plan) {
      experiment.base.plan.scale1_long_side = experiment.dataset.maps_plan->scale1_long_side;
    }
  }
  return experiment;
}

namespace {

std::vector<TapMaps> tap_maps_at(const Experiment& experiment, const ScalePlan& plan) {
  const Dataset& data = experiment.dataset;
  if (!experiment.net) {
    if (data.maps_plan && data.maps_plan->scale != plan.scale) {
      throw InvalidInput("tensor directory was exported at scale " + std::to_string(data.maps_plan->scale) +
                         ", cannot evaluate scale " + std::to_string(plan.scale));
    }
    return data.maps;
  }
  plan.effective_long_side();
  std::vector<TapMaps> maps(data.images.size());
  parallel_for(data.images.size(), [&](std::size_t i) {
    const ImageRaster& image = data.images[i];
    maps[i] = forward(bilinear_resize(image, target_dims(image.size(), plan)), *experiment.net);
  });
  return maps;
}

DescriptorSet describe_all(const Experiment& experiment, const std::vector<TapMaps>& maps,
                           const RunConfig& config, const PipelineConfig& pipeline) {
  std::vector<DescriptorVector<double>> rows(maps.size());
  parallel_for(maps.size(), [&](std::size_t i) { rows[i] = describe_maps(maps[i], pipeline); });
  DescriptorSet set;
  set.ids = experiment.dataset.manifest.ids();
  const Index dim = rows.empty() ? 0 : rows.front().dim();
  set.rows.resize(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) set.rows.row(static_cast<Index>(i)) = rows[i].values().transpose();
  set.config = config.to_json(false);
  set.fingerprint = config.fingerprint();
  return set;
}

EvalReport evaluate_with_maps(const Experiment& experiment, const std::vector<TapMaps>& maps,
                              const RunConfig& config) {
  const std::string fingerprint = config.fingerprint();
  const DatasetManifest& manifest = experiment.dataset.manifest;
  if (config.task == Task::Search) {
    if (!manifest.relevance) throw InvalidInput("search evaluation needs queries or groups in the manifest");
    std::vector<RankedList> lists;
    if (!config.fusion_weights.empty()) {
      std::vector<DescriptorIndex> indexes;
      for (const auto& layer : config.layers) {
        const DescriptorSet set = describe_all(experiment, maps, config, PipelineConfig{config.pooling, {layer}, false});
        indexes.push_back(build_index(set.rows, set.ids));
      }
      lists = rank_queries_fused(indexes, config.fusion_weights, *manifest.relevance);
    } else {
      const DescriptorSet set = describe_all(experiment, maps, config, config.pipeline());
      lists = rank_queries(build_index(set.rows, set.ids), *manifest.relevance);
    }
    return evaluate_search(*manifest.relevance, lists, describe_config(config), fingerprint);
  }

  LabeledSet labeled;
  labeled.descriptors = describe_all(experiment, maps, config, config.pipeline()).rows;
  labeled.labels = manifest.labels();
  labeled.class_count = manifest.class_count;
  if (labeled.class_count <= 0) {
    for (int label : labeled.labels) labeled.class_count = std::max(labeled.class_count, label + 1);
  }
  EvalReport report = run_protocol(labeled, config.split, config.knn, fingerprint);
  report.label = describe_config(config) + " " + report.label;
  return report;
}

}  // namespace

DescriptorSet extract_descriptors(const Experiment& experiment, const RunConfig& config) {
  return describe_all(experiment, tap_maps_at(experiment, config.plan), config, config.pipeline());
}

std::vector<DescriptorSet> extract_layer_descriptors(const Experiment& experiment, const RunConfig& config) {
  const auto maps = tap_maps_at(experiment, config.plan);
  std::vector<DescriptorSet> out;
  for (const auto& layer : config.layers) {
    out.push_back(describe_all(experiment, maps, config, PipelineConfig{config.pooling, {layer}, false}));
  }
  return out;
}

EvalReport evaluate(const Experiment& experiment, const RunConfig& config) {
  return evaluate_with_maps(experiment, tap_maps_at(experiment, config.plan), config);
}

std::string describe_config(const RunConfig& config) {
  std::string layers;
  for (const auto& layer : config.layers) layers += (layers.empty() ? "" : "+") + layer;
  std::string mode = "single";
  if (!config.fusion_weights.empty()) {
    mode = "late";
  } else if (config.layers.size() > 1 || config.fuse) {
    mode = "concat";
  }
  char scale[32];
  std::snprintf(scale, sizeof scale, "s=%.2f", config.plan.scale);
  return layers + " " + mode + " " + std::string(to_string(config.pooling)) + " " + scale;
}

std::vector<SweepCell> SweepGrid::cells() const {
  std::vector<SweepCell> out;
  for (const auto& layer : layers) {
    for (double scale : scales) {
      for (PoolingMode pooling : poolings) out.push_back({layer, scale, pooling});
    }
  }
  return out;
}

SweepGrid SweepGrid::from_json(const nlohmann::json& doc) {
  try {
    SweepGrid grid;
    grid.layers = doc.at("layers").get<std::vector<std::string>>();
    grid.scales = doc.value("scales", std::vector<double>{1.0});
    for (const auto& mode : doc.value("pooling", std::vector<std::string>{"avg"})) {
      grid.poolings.push_back(parse_pooling_mode(mode));
    }
    if (grid.layers.empty() || grid.scales.empty() || grid.poolings.empty()) {
      throw InvalidInput("sweep grid axes must be non-empty");
    }
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed sweep grid: ") + e.what());
  }
}

RunConfig cell_config(const Experiment& experiment, const SweepCell& cell) {
  RunConfig config = experiment.base;
  config.fusion_weights.clear();
  if (cell.layer == "all") {
    config.layers = experiment.available_layers();
    config.fuse = true;
  } else if (cell.layer.find('+') != std::string::npos) {
    config.layers.clear();
    std::size_t start = 0;
    while (start <= cell.layer.size()) {
      const std::size_t end = std::min(cell.layer.find('+', start), cell.layer.size());
      config.layers.push_back(cell.layer.substr(start, end - start));
      start = end + 1;
    }
    config.fuse = true;
  } else {
    config.layers = {cell.layer};
    config.fuse = false;
  }
  const auto available = experiment.available_layers();
  for (const auto& layer : config.layers) {
    if (std::find(available.begin(), available.end(), layer) == available.end()) {
      throw InvalidInput("unknown layer '" + layer + "'");
    }
  }
  config.pooling = cell.pooling;
  config.plan = experiment.base.plan.at_scale(cell.scale);
  return config;
}

std::vector<CellOutcome> run_sweep(const Experiment& experiment, const SweepGrid& grid) {
  const auto cells = grid.cells();
  std::vector<CellOutcome> outcomes(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) outcomes[i].cell = cells[i];

  // One forward pass per image and scale; every layer/pooling cell reuses it.
  std::vector<double> scales;
  for (const auto& cell : cells) {
    if (std::find(scales.begin(), scales.end(), cell.scale) == scales.end()) scales.push_back(cell.scale);
  }
  for (double scale : scales) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].scale == scale) members.push_back(i);
    }
    std::vector<TapMaps> maps;
    try {
      maps = tap_maps_at(experiment, experiment.base.plan.at_scale(scale));
    } catch (const std::exception& e) {
      for (std::size_t i : members) outcomes[i].error = e.what();
      continue;
    }
    parallel_for(members.size(), [&](std::size_t m) {
      CellOutcome& outcome = outcomes[members[m]];
      try {
        outcome.report = evaluate_with_maps(experiment, maps, cell_config(experiment, outcome.cell));
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
    });
  }
  return outcomes;
}

namespace {

std::string primary_metric(const EvalReport& report) {
  if (report.task == "classify") return "accuracy";
  return report.metrics.count("N-S") ? "N-S" : "mAP";
}

std::string format_scale(double scale) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.4f", scale);
  return buffer;
}

nlohmann::json cell_json(const SweepCell& cell) {
  return {{"layer", cell.layer}, {"scale", cell.scale}, {"pooling", std::string(to_string(cell.pooling))}};
}

}  // namespace

std::string sweep_csv(std::span<const CellOutcome> outcomes) {
  std::string out = "layer,scale,pooling,metric,value\n";
  for (const auto& outcome : outcomes) {
    if (!outcome.report) continue;
    const std::string metric = primary_metric(*outcome.report);
    char value[64];
    std::snprintf(value, sizeof value, "%.6f", outcome.report->metrics.at(metric));
    out += outcome.cell.layer + "," + format_scale(outcome.cell.scale) + "," +
           std::string(to_string(outcome.cell.pooling)) + "," + metric + "," + value + "\n";
  }
  return out;
}

int write_sweep(std::span<const CellOutcome> outcomes, const fs::path& dir) {
  fs::create_directories(dir / "cells");
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& outcome = outcomes[i];
    char name[32];
    std::snprintf(name, sizeof name, "%03zu.json", i);
    nlohmann::json doc{{"cell", cell_json(outcome.cell)}};
    if (outcome.report) {
      doc["report"] = report_to_json(*outcome.report);
    } else {
      doc["error"] = outcome.error;
      nlohmann::json failure = cell_json(outcome.cell);
      failure["error"] = outcome.error;
      failures.push_back(std::move(failure));
    }
    std::ofstream(dir / "cells" / name) << doc.dump(2) << '\n';
  }
  std::ofstream(dir / "summary.csv") << sweep_csv(outcomes);
  std::ofstream(dir / "failures.json") << failures.dump(2) << '\n';
  return failures.empty() ? 0 : 2;
}

}  // namespace layerpool
