#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "layerpool/experiment.hpp"
#include "layerpool/synthetic.hpp"

using namespace layerpool;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw InvalidInput("cannot write " + path.string());
}

// Flags shared by every subcommand that builds a RunConfig.
struct ConfigFlags {
  fs::path manifest;
  std::uint64_t seed = 0;
  fs::path network;
  fs::path tensor_dir;
  std::string layers = "all";
  std::string pooling = "avg";
  double scale = 1.0;
  Index scale1 = 0;
  std::string scale_source;
  bool fuse = false;
  std::vector<double> weights;
  Index train_per_class = 1;
  int repeats = 10;
  std::uint64_t split_seed = 0;
  Index k = 5;
};

void add_network_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--manifest", f.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Seed of the built-in toy network");
  auto* net = cmd->add_option("--network", f.network, "Network JSON instead of the seeded toy network")
                  ->check(CLI::ExistingFile);
  cmd->add_option("--tensor-dir", f.tensor_dir, "Directory of precomputed tap tensors")
      ->check(CLI::ExistingDirectory)
      ->excludes(net);
  cmd->add_option("--scale1", f.scale1, "Long side at scale 1.0 (default: mean long side of --scale-source)");
  cmd->add_option("--scale-source", f.scale_source,
                  "Split whose image sizes set scale 1.0 (default: database for search, train for classify)");
}

void add_descriptor_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--layers", f.layers, "Comma-separated taps, a+b for a fused set, or all")
      ->capture_default_str();
  cmd->add_option("--pooling", f.pooling, "Global pooling")->check(CLI::IsMember({"avg", "max"}))->capture_default_str();
  cmd->add_option("--scale", f.scale, "Fraction of the scale-1.0 long side")->capture_default_str();
  cmd->add_flag("--fuse", f.fuse, "Concatenate the listed layers into one descriptor");
  cmd->add_option("--weights", f.weights, "Late-fusion weights, one per layer (search only)")->delimiter(',');
}

void add_classify_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--train-per-class", f.train_per_class, "Training images per class")->capture_default_str();
  cmd->add_option("--repeats", f.repeats, "Random splits")->capture_default_str();
  cmd->add_option("--split-seed", f.split_seed, "Seed of the random splits")->capture_default_str();
  cmd->add_option("--k", f.k, "Neighbours of the k-NN classifier")->capture_default_str();
}

std::vector<std::string> taps_of(const NetworkSource& source) {
  switch (source.kind) {
    case NetworkSource::Kind::ToySeed:
      return default_toy_network(source.seed).tap_points();
    case NetworkSource::Kind::NetworkJson:
      return network_from_json(read_json(source.path)).tap_points();
    case NetworkSource::Kind::TensorDir:
      return read_json(source.path / "manifest.json").at("taps").get<std::vector<std::string>>();
  }
  return {};
}

std::string default_scale_split(const fs::path& manifest_path, Task task) {
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  const std::string wanted = task == Task::Search ? "database" : "train";
  for (const auto& image : manifest.images) {
    if (image.split == wanted) return wanted;
  }
  return "all";
}

RunConfig build_config(const ConfigFlags& f, Task task) {
  RunConfig config;
  config.task = task;
  config.manifest = fs::weakly_canonical(f.manifest);
  config.network.seed = f.seed;
  if (!f.network.empty()) config.network = {NetworkSource::Kind::NetworkJson, 0, f.network};
  if (!f.tensor_dir.empty()) config.network = {NetworkSource::Kind::TensorDir, 0, f.tensor_dir};
  config.pooling = parse_pooling_mode(f.pooling);
  config.plan = {f.scale1, f.scale};
  config.scale_split = f.scale_source.empty() ? default_scale_split(f.manifest, task) : f.scale_source;
  config.fusion_weights = f.weights;
  config.split = {f.train_per_class, f.repeats, f.split_seed};
  config.knn.k = f.k;

  auto tokens = split_on(f.layers, ',');
  config.fuse = f.fuse;
  if (tokens.size() == 1 && tokens[0].find('+') != std::string::npos) {
    tokens = split_on(tokens[0], '+');
    config.fuse = f.weights.empty();
  } else if (tokens.size() == 1 && tokens[0] == "all") {
    tokens = taps_of(config.network);
    config.fuse = f.weights.empty();
  }
  config.layers = tokens;
  if (f.scale > 1.0) {
    std::fprintf(stderr, "warning: scale %.2f upsamples beyond the scale-1.0 size\n", f.scale);
  }
  config.validate();
  return config;
}

void print_report(const EvalReport& report, const fs::path& out) {
  const std::vector<EvalReport> rows{report};
  std::cout << report_table(rows);
  if (!out.empty()) write_text(out, report_to_json(report).dump(2) + "\n");
}

fs::path with_layer_suffix(const fs::path& path, const std::string& layer) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + "." + layer + path.extension().string());
  return out;
}

int cmd_scale_plan(const ConfigFlags& f, const fs::path& out) {
  const DatasetManifest manifest = DatasetManifest::load(f.manifest);
  const std::string split = f.scale_source.empty() ? "all" : f.scale_source;
  ScalePlan plan = f.scale1 > 0 ? ScalePlan{f.scale1, 1.0} : compute_scale1(manifest.sizes(split));
  plan = plan.at_scale(f.scale);
  if (plan.upscales()) std::fprintf(stderr, "warning: scale %.2f upsamples beyond the scale-1.0 size\n", f.scale);
  const nlohmann::json doc{{"scale1_long_side", plan.scale1_long_side},
                           {"scale", plan.scale},
                           {"effective_long_side", plan.effective_long_side()}};
  if (out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    write_text(out, doc.dump(2) + "\n");
  }
  return 0;
}

int cmd_extract(const ConfigFlags& f, const fs::path& out) {
  const RunConfig config = build_config(f, Task::Search);
  const Experiment experiment = make_experiment(config);
  ensure_parent(out);
  if (!config.fusion_weights.empty()) {
    auto sets = extract_layer_descriptors(experiment, experiment.base);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto& layer = experiment.base.layers[i];
      DescriptorSet& set = sets[i];
      set.config["descriptor_layer"] = layer;
      const fs::path path = with_layer_suffix(out, layer);
      save_descriptor_set(set, path);
      std::printf("%s: %td x %td\n", path.string().c_str(), set.rows.rows(), set.rows.cols());
    }
    return 0;
  }
  const DescriptorSet set = extract_descriptors(experiment, experiment.base);
  save_descriptor_set(set, out);
  std::printf("%s: %td x %td\n", out.string().c_str(), set.rows.rows(), set.rows.cols());
  return 0;
}

int cmd_index(const fs::path& descriptors, const fs::path& out) {
  DescriptorSet set = load_descriptor_set(descriptors);
  const DescriptorIndex index = build_index(set.rows, set.ids);
  set.rows = index.rows();
  set.config["normalized"] = true;
  ensure_parent(out);
  save_descriptor_set(set, out);
  std::printf("%s: %td rows of dim %td\n", out.string().c_str(), index.size(), index.dim());
  return 0;
}

int cmd_search(const fs::path& index_path, const fs::path& queries_path, std::vector<std::string> query_ids, Index k,
               bool exclude_self) {
  const DescriptorSet set = load_descriptor_set(index_path);
  const DescriptorIndex index = build_index(set.rows, set.ids);
  std::vector<std::pair<std::string, Vector<double>>> queries;
  if (!queries_path.empty()) {
    const DescriptorSet q = load_descriptor_set(queries_path);
    for (Index i = 0; i < q.rows.rows(); ++i) queries.emplace_back(q.ids[static_cast<std::size_t>(i)], q.rows.row(i).transpose());
  }
  for (const auto& id : query_ids) {
    const auto pos = index.position(id);
    if (!pos) throw InvalidInput("query id '" + id + "' is not in the index");
    queries.emplace_back(id, index.row(*pos));
  }
  if (queries.empty()) throw InvalidInput("give --query or --queries");
  std::printf("query\trank\tid\tscore\n");
  for (const auto& [id, vector] : queries) {
    const RankedList list = search(vector, index, k, {id, exclude_self});
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      std::printf("%s\t%zu\t%s\t%.9f\n", id.c_str(), r + 1, list.entries[r].id.c_str(), list.entries[r].score);
    }
  }
  return 0;
}

int cmd_eval_search(const ConfigFlags& f, const fs::path& descriptors, const fs::path& relevance_path,
                    const fs::path& out) {
  if (descriptors.empty()) {
    const RunConfig config = build_config(f, Task::Search);
    const Experiment experiment = make_experiment(config);
    print_report(evaluate(experiment, experiment.base), out);
    return 0;
  }
  const DescriptorSet set = load_descriptor_set(descriptors);
  RelevanceManifest relevance;
  if (!relevance_path.empty()) {
    relevance = RelevanceManifest::from_json(read_json(relevance_path));
  } else {
    const DatasetManifest manifest = DatasetManifest::load(f.manifest);
    if (!manifest.relevance) throw InvalidInput("the manifest has no queries or groups");
    relevance = *manifest.relevance;
  }
  const auto lists = rank_queries(build_index(set.rows, set.ids), relevance);
  print_report(evaluate_search(relevance, lists, descriptors.filename().string(), set.fingerprint), out);
  return 0;
}

// {"labels": {"id": 0, ...}, "class_count": 3} or a dataset manifest.
LabeledSet labeled_from(const DescriptorSet& set, const fs::path& labels_path) {
  const nlohmann::json doc = read_json(labels_path);
  std::map<std::string, int> by_id;
  int class_count = 0;
  if (doc.contains("images")) {
    const DatasetManifest manifest = DatasetManifest::from_json(doc, labels_path.parent_path());
    const auto labels = manifest.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) by_id[manifest.images[i].id] = labels[i];
    class_count = manifest.class_count;
  } else {
    by_id = doc.at("labels").get<std::map<std::string, int>>();
    class_count = doc.value("class_count", 0);
  }
  LabeledSet labeled;
  labeled.descriptors = set.rows;
  for (const auto& id : set.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidInput("no label for '" + id + "'");
    labeled.labels.push_back(it->second);
    class_count = std::max(class_count, it->second + 1);
  }
  labeled.class_count = class_count;
  return labeled;
}

int cmd_eval_classify(const ConfigFlags& f, const fs::path& descriptors, const fs::path& labels,
                      const fs::path& out) {
  if (descriptors.empty()) {
    const RunConfig config = build_config(f, Task::Classify);
    const Experiment experiment = make_experiment(config);
    print_report(evaluate(experiment, experiment.base), out);
    return 0;
  }
  if (labels.empty()) throw InvalidInput("--descriptors needs --labels");
  const DescriptorSet set = load_descriptor_set(descriptors);
  EvalReport report = run_protocol(labeled_from(set, labels), SplitSpec{f.train_per_class, f.repeats, f.split_seed},
                                   KnnConfig{f.k}, set.fingerprint);
  report.label = descriptors.filename().string() + " " + report.label;
  print_report(report, out);
  return 0;
}

int cmd_sweep(ConfigFlags f, const std::string& task, const fs::path& grid_path, const std::string& scales,
              const fs::path& out) {
  SweepGrid grid;
  if (!grid_path.empty()) {
    grid = SweepGrid::from_json(read_json(grid_path));
  } else {
    grid.layers = split_on(f.layers, ',');
    for (const auto& s : split_on(scales, ',')) grid.scales.push_back(std::stod(s));
    for (const auto& p : split_on(f.pooling, ',')) grid.poolings.push_back(parse_pooling_mode(p));
  }
  for (double s : grid.scales) {
    if (s > 1.0) std::fprintf(stderr, "warning: scale %.2f upsamples beyond the scale-1.0 size\n", s);
  }
  f.layers = "all";
  f.pooling = "avg";
  f.scale = 1.0;
  f.weights.clear();
  const RunConfig base = build_config(f, parse_task(task));
  const Experiment experiment = make_experiment(base);
  const auto outcomes = run_sweep(experiment, grid);
  const int status = write_sweep(outcomes, out);
  write_text(out / "config.json", experiment.base.to_json().dump(2) + "\n");
  std::size_t failed = 0;
  for (const auto& outcome : outcomes) {
    if (!outcome.report) {
      ++failed;
      std::fprintf(stderr, "cell %s @ %.2f %s failed: %s\n", outcome.cell.layer.c_str(), outcome.cell.scale,
                   std::string(to_string(outcome.cell.pooling)).c_str(), outcome.error.c_str());
    }
  }
  std::printf("%zu cells, %zu failed; summary in %s\n", outcomes.size(), failed, (out / "summary.csv").string().c_str());
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pooled multi-layer CNN descriptors for retrieval and classification"};
  app.require_subcommand(1);

  ConfigFlags flags;
  fs::path out, descriptors, relevance, labels, index_path, queries_path, grid_path;
  std::vector<std::string> query_ids;
  Index top_k = 10;
  bool exclude_self = false;
  std::string task = "search";
  std::string scales = "1.0";
  SyntheticGroupsSpec synth;

  auto* scale_plan = app.add_subcommand("scale-plan", "Print the scale plan of a manifest");
  scale_plan->add_option("--manifest", flags.manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
  scale_plan->add_option("--scale-source", flags.scale_source, "Split whose sizes set scale 1.0 (default: all)");
  scale_plan->add_option("--scale1", flags.scale1, "Fixed long side at scale 1.0");
  scale_plan->add_option("--scale", flags.scale, "Fraction of the scale-1.0 long side");
  scale_plan->add_option("--out", out, "Write JSON here instead of stdout");

  auto* extract = app.add_subcommand("extract", "Describe every manifest image and save the descriptor set");
  add_network_flags(extract, flags);
  add_descriptor_flags(extract, flags);
  extract->add_option("--out", out, "Descriptor file (.npy, with a .json sidecar)")->required();

  auto* index = app.add_subcommand("index", "l2-normalize a descriptor set for search");
  index->add_option("--descriptors", descriptors, "Descriptor file")->required()->check(CLI::ExistingFile);
  index->add_option("--out", out, "Index file")->required();

  auto* search_cmd = app.add_subcommand("search", "Rank an index against query descriptors");
  search_cmd->add_option("--index", index_path, "Index or descriptor file")->required()->check(CLI::ExistingFile);
  search_cmd->add_option("--query", query_ids, "Id of an indexed row to use as query (repeatable)");
  search_cmd->add_option("--queries", queries_path, "Descriptor file of external queries")->check(CLI::ExistingFile);
  search_cmd->add_option("--k", top_k, "Results per query")->capture_default_str();
  search_cmd->add_flag("--exclude-self", exclude_self, "Drop the row with the query's id");

  auto* eval_search = app.add_subcommand("eval-search", "mAP and N-S of a configuration or descriptor file");
  add_network_flags(eval_search, flags);
  add_descriptor_flags(eval_search, flags);
  eval_search->add_option("--descriptors", descriptors, "Evaluate a saved descriptor set instead")
      ->check(CLI::ExistingFile);
  eval_search->add_option("--relevance", relevance, "Relevance JSON (default: the manifest's)")
      ->check(CLI::ExistingFile);
  eval_search->add_option("--out", out, "Report JSON");

  auto* eval_classify = app.add_subcommand("eval-classify", "k-NN accuracy over random splits");
  add_network_flags(eval_classify, flags);
  add_descriptor_flags(eval_classify, flags);
  add_classify_flags(eval_classify, flags);
  eval_classify->add_option("--descriptors", descriptors, "Evaluate a saved descriptor set instead")
      ->check(CLI::ExistingFile);
  eval_classify->add_option("--labels", labels, "Labels JSON or dataset manifest for --descriptors")
      ->check(CLI::ExistingFile);
  eval_classify->add_option("--out", out, "Report JSON");

  auto* sweep = app.add_subcommand("sweep", "Evaluate a layer x scale x pooling grid");
  add_network_flags(sweep, flags);
  add_classify_flags(sweep, flags);
  sweep->add_option("--task", task, "search or classify")->check(CLI::IsMember({"search", "classify"}))->capture_default_str();
  sweep->add_option("--grid", grid_path, "Grid JSON {layers, scales, pooling}")->check(CLI::ExistingFile);
  sweep->add_option("--layers", flags.layers, "Comma-separated cell layers (a tap, a+b, or all)")
      ->capture_default_str();
  sweep->add_option("--scales", scales, "Comma-separated scales")->capture_default_str();
  sweep->add_option("--pooling", flags.pooling, "Comma-separated pooling modes")->capture_default_str();
  sweep->add_option("--out", out, "Output directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic grouped dataset with its manifest");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--groups", synth.groups)->capture_default_str();
  synth_cmd->add_option("--per-group", synth.per_group)->capture_default_str();
  synth_cmd->add_option("--width", synth.width)->capture_default_str();
  synth_cmd->add_option("--height", synth.height)->capture_default_str();
  synth_cmd->add_option("--channels", synth.channels)->check(CLI::IsMember({1, 3}))->capture_default_str();
  synth_cmd->add_option("--max-shift", synth.max_shift)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*scale_plan) return cmd_scale_plan(flags, out);
    if (*extract) return cmd_extract(flags, out);
    if (*index) return cmd_index(descriptors, out);
    if (*search_cmd) return cmd_search(index_path, queries_path, query_ids, top_k, exclude_self);
    if (*eval_search) return cmd_eval_search(flags, descriptors, relevance, out);
    if (*eval_classify) return cmd_eval_classify(flags, descriptors, labels, out);
    if (*sweep) return cmd_sweep(flags, task, grid_path, scales, out);
    if (*synth_cmd) {
      const DatasetManifest manifest = write_group_dataset(synth, out);
      std::printf("%zu images in %s\n", manifest.images.size(), out.string().c_str());
      return 0;
    }
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const TensorFormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
