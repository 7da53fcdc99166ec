// Runs every acceptance criterion once and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>

#include "layerpool/classify.hpp"
#include "layerpool/cnn.hpp"
#include "layerpool/descriptor.hpp"
#include "layerpool/npy.hpp"
#include "layerpool/resize.hpp"
#include "layerpool/retrieval.hpp"
#include "layerpool/synthetic.hpp"
#include "oracles.hpp"

using namespace layerpool;

namespace {

// Tolerances and budgets.
constexpr double kPoolRelTol = 1e-9;
constexpr double kUnitNormTol = 1e-6;
constexpr double kExactTol = 1e-12;
constexpr double kLayerTol = 1e-9;
constexpr double kApTol = 1e-4;
constexpr double kChanceTol = 0.03;
constexpr double kDimBudget = 1.0;
constexpr double kPoolBudget = 5.0;
constexpr double kEndToEndBudget = 30.0;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

Outcome dimension_identities() {
  Outcome out;
  out.require(fused_dimension(alexnet_channel_table()) == 9568, "AlexNet table does not sum to 9568");
  out.require(fused_dimension(vgg19_channel_table()) == 9664, "VGGNet table does not sum to 9664");
  out.detail = out.pass ? "9568 / 9664" : out.detail;
  return out;
}

Outcome pooling_oracles() {
  Outcome out;
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<long> side(1, 16), ch(1, 64);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = oracle::random_volume(side(rng), side(rng), ch(rng), rng, -5.0, 5.0);
    const auto map = FeatureMap<double>::from_values(v.width, v.height, v.channels, v.values);
    const auto avg = avg_pool(map);
    const auto mx = max_pool(map);
    const auto want_avg = oracle::average_pool(v);
    const auto want_max = oracle::max_pool(v);
    for (long c = 0; c < v.channels; ++c) {
      const auto i = static_cast<std::size_t>(c);
      worst = std::max(worst, std::abs(avg[c] - want_avg[i]) / std::max(1.0, std::abs(want_avg[i])));
      worst = std::max(worst, std::abs(mx[c] - want_max[i]) / std::max(1.0, std::abs(want_max[i])));
    }
  }
  out.require(worst <= kPoolRelTol, fmt("worst relative error %.3g", worst));
  if (out.pass) out.detail = fmt("200 maps, worst relative error %.3g", worst);
  return out;
}

Outcome normalization() {
  Outcome out;
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<Index> dim(1, 512);
  std::normal_distribution<double> g(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector<double> v(dim(rng));
    for (Index i = 0; i < v.size(); ++i) v[i] = g(rng);
    const auto n = sqrt_l2_normalize(DescriptorVector<double>(v));
    worst = std::max(worst, std::abs(n.values().norm() - 1.0));
  }
  out.require(worst <= kUnitNormTol, fmt("norm off by %.3g", worst));
  Vector<double> example(2);
  example << 9, 16;
  const auto e = sqrt_l2_normalize(DescriptorVector<double>(example));
  out.require(std::abs(e[0] - 0.6) <= kExactTol && std::abs(e[1] - 0.8) <= kExactTol,
              fmt("[9,16] gave [%.15g, %.15g]", e[0], e[1]));
  if (out.pass) out.detail = fmt("1000 vectors within %.3g; [9,16] -> [0.6,0.8]", worst);
  return out;
}

double max_abs_diff(const FeatureMap<double>& got, const oracle::Volume& want) {
  if (got.width() != want.width || got.height() != want.height || got.channels() != want.channels) {
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (long c = 0; c < want.channels; ++c) {
    for (long y = 0; y < want.height; ++y) {
      for (long x = 0; x < want.width; ++x) worst = std::max(worst, std::abs(got(c, y, x) - want.at(c, y, x)));
    }
  }
  return worst;
}

Outcome layer_oracles() {
  Outcome out;
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<long> side(3, 14), ch(1, 6), kern(1, 3), str(1, 2), pad(0, 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const long k = kern(rng);
    const auto input = oracle::random_volume(side(rng), side(rng), ch(rng), rng);
    const auto map = FeatureMap<double>::from_values(input.width, input.height, input.channels, input.values);

    LayerSpec conv = LayerSpec::conv("c", input.channels, ch(rng), k, str(rng), pad(rng));
    for (Index i = 0; i < conv.weights.size(); ++i) conv.weights.data()[i] = u(rng);
    for (Index i = 0; i < conv.bias.size(); ++i) conv.bias[i] = u(rng);
    std::vector<double> w;
    for (Index r = 0; r < conv.weights.rows(); ++r) {
      for (Index c = 0; c < conv.weights.cols(); ++c) w.push_back(conv.weights(r, c));
    }
    const std::vector<double> b(conv.bias.data(), conv.bias.data() + conv.bias.size());
    worst = std::max(worst, max_abs_diff(conv2d(map, conv),
                                         oracle::convolve(input, w, b, conv.out_channels, k, conv.stride, conv.padding)));

    const long pk = 2 + trial % 2;
    if (input.width >= pk && input.height >= pk) {
      const LayerSpec pool = LayerSpec::maxpool("p", pk, str(rng), trial % 3 == 0 ? 1 : 0);
      worst = std::max(worst, max_abs_diff(maxpool2d(map, pool), oracle::window_max(input, pk, pool.stride, pool.padding)));
    }
  }
  out.require(worst <= kLayerTol, fmt("worst absolute error %.3g", worst));

  const NetworkSpec net = default_toy_network(1);
  std::uniform_int_distribution<Index> size(32, 100);
  for (int trial = 0; trial < 20; ++trial) {
    const Index w = size(rng);
    const Index h = size(rng);
    const auto maps = forward(ImageRaster::constant(w, h, 3, 0.5), net);
    Index ew = w, eh = h;
    for (const char* tap : {"conv1", "conv2", "conv3"}) {
      ew = window_output_extent(ew, 2, 2, 0);
      eh = window_output_extent(eh, 2, 2, 0);
      out.require(maps.at(tap).width() == ew && maps.at(tap).height() == eh,
                  std::string("shape rule broken at ") + tap);
    }
    out.require(maps.at("fc").width() == ew - 3 && maps.at("fc").height() == eh - 3, "shape rule broken at fc");
  }
  if (out.pass) out.detail = fmt("50 cases, worst error %.3g; 20 input sizes", worst);
  return out;
}

std::vector<ImageSize> sizes_with_means(long width_tenths, long height_tenths) {
  const int n = 10;
  std::vector<ImageSize> sizes(n);
  for (int i = 0; i < n; ++i) {
    sizes[i].width = width_tenths / n + (i < width_tenths % n ? 1 : 0);
    sizes[i].height = height_tenths / n + (i < height_tenths % n ? 1 : 0);
  }
  return sizes;
}

Outcome resize_protocol() {
  Outcome out;
  struct Row {
    const char* name;
    long long_tenths, short_tenths;
    Index expected;
  };
  const Row rows[] = {
      {"Bird", 4908, 3643, 491},   {"Flower", 6640, 5000, 664},     {"Indoor", 5213, 3991, 521},
      {"SUN", 10028, 7332, 1003},  {"Cal-101", 3197, 2270, 320},    {"Cal-256", 3986, 2969, 399},
      {"VOC07", 4964, 3582, 496},  {"Holidays", 10240, 7680, 1024}, {"Ukbench", 6400, 4800, 640},
      {"Oxford", 10240, 7460, 1024},
  };
  for (const auto& row : rows) {
    const Index got = compute_scale1(sizes_with_means(row.long_tenths, row.short_tenths)).scale1_long_side;
    out.require(got == row.expected, std::string(row.name) + " long side " + std::to_string(got));
  }
  const ImageSize dims = target_dims({800, 600}, {400, 0.75});
  out.require(dims == ImageSize{300, 225}, "800x600 at (400, 0.75) gave " + std::to_string(dims.width) + "x" +
                                               std::to_string(dims.height));
  if (out.pass) out.detail = "10 table rows; 800x600 -> 300x225";
  return out;
}

RankedList list_of(const std::vector<std::string>& ids, const std::string& query) {
  RankedList list{query, {}};
  double score = 1.0;
  for (const auto& id : ids) list.entries.push_back({id, score -= 1e-3});
  return list;
}

Outcome retrieval_metrics() {
  Outcome out;
  std::vector<std::string> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back("r" + std::to_string(i));
  const double ap = average_precision(list_of(ten, "q"), {"r1", "r3", "r6"});
  out.require(std::abs(ap - 0.7222) <= kApTol, fmt("AP %.6f", ap));

  std::mt19937_64 rng(1004);
  for (int dataset = 0; dataset < 100; ++dataset) {
    RelevanceManifest manifest;
    manifest.exclude_self = false;
    std::vector<std::string> all;
    for (int g = 0; g < 2 + dataset % 9; ++g) {
      manifest.groups.emplace_back();
      for (int m = 0; m < 4; ++m) {
        all.push_back("g" + std::to_string(g) + "m" + std::to_string(m));
        manifest.groups.back().push_back(all.back());
      }
    }
    std::vector<RankedList> lists;
    double sum = 0.0;
    for (const auto& q : manifest.effective_queries()) {
      auto order = all;
      std::shuffle(order.begin(), order.end(), rng);
      sum += oracle::top4_intersection(order, *manifest.group_of(q.id));
      lists.push_back(list_of(order, q.id));
    }
    const double ns = ns_score(manifest, lists);
    out.require(ns >= 0.0 && ns <= 4.0 && std::abs(ns - sum / static_cast<double>(lists.size())) <= kExactTol,
                fmt("N-S %.6f on dataset %.0f", ns, dataset));
  }

  std::normal_distribution<double> g;
  for (std::size_t n : {1u, 7u, 100u, 500u, 1000u}) {
    const Index dim = 6;
    std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
    CellMatrix<double> m(static_cast<Index>(n), dim);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "id%05zu", i);
      ids.push_back(id);
      for (Index d = 0; d < dim; ++d) m(static_cast<Index>(i), d) = rows[i][static_cast<std::size_t>(d)] = g(rng);
    }
    const DescriptorIndex index(m, ids);
    std::vector<double> qv(dim);
    for (auto& x : qv) x = g(rng);
    const auto want = oracle::exhaustive_ranking(rows, ids, qv);
    const auto got = search(Eigen::Map<const Vector<double>>(qv.data(), dim), index, static_cast<Index>(n));
    bool same = got.entries.size() == want.size();
    for (std::size_t r = 0; same && r < want.size(); ++r) {
      same = got.entries[r].id == want[r].first && std::abs(got.entries[r].score - want[r].second) <= kExactTol;
    }
    out.require(same, "search differs from the exhaustive oracle at n=" + std::to_string(n));
  }
  if (out.pass) out.detail = fmt("AP %.4f; 100 N-S datasets; n up to 1000", ap);
  return out;
}

FeatureMap<double> cyclic_shift(const FeatureMap<double>& map, Index dx, Index dy) {
  std::vector<double> values(static_cast<std::size_t>(map.channels() * map.spatial_size()));
  std::size_t i = 0;
  for (Index c = 0; c < map.channels(); ++c) {
    for (Index y = 0; y < map.height(); ++y) {
      for (Index x = 0; x < map.width(); ++x) {
        values[i++] = map(c, (y + dy) % map.height(), (x + dx) % map.width());
      }
    }
  }
  return FeatureMap<double>::from_values(map.width(), map.height(), map.channels(), values, map.layer_name());
}

double map_of(const std::vector<Vector<double>>& descriptors, const std::vector<std::string>& ids,
              const RelevanceManifest& relevance) {
  CellMatrix<double> rows(static_cast<Index>(descriptors.size()), descriptors.front().size());
  for (std::size_t i = 0; i < descriptors.size(); ++i) rows.row(static_cast<Index>(i)) = descriptors[i].transpose();
  const DescriptorIndex index(std::move(rows), ids);
  return mean_ap(relevance, rank_queries(index, relevance));
}

Outcome end_to_end() {
  Outcome out;
  SyntheticGroupsSpec spec;
  spec.groups = 5;
  spec.per_group = 4;
  const auto images = make_group_images(spec);
  const auto manifest = group_manifest(images);
  const NetworkSpec net = default_toy_network(0);
  const ScalePlan plan = compute_scale1(manifest.sizes("database"));

  std::vector<TapMaps> maps;
  std::vector<std::string> ids;
  for (const auto& image : images) {
    maps.push_back(forward(bilinear_resize(image.image, target_dims(image.image.size(), plan)), net));
    ids.push_back(image.id);
  }

  const auto taps = net.tap_points();
  double worst_single = 1.0;
  std::string worst_tap;
  for (const auto& tap : taps) {
    std::vector<Vector<double>> d;
    for (const auto& m : maps) d.push_back(describe_maps(m, {PoolingMode::Average, {tap}, false}).values());
    const double value = map_of(d, ids, *manifest.relevance);
    if (value < worst_single) {
      worst_single = value;
      worst_tap = tap;
    }
  }
  std::vector<Vector<double>> fused;
  for (const auto& m : maps) fused.push_back(describe_maps(m, {PoolingMode::Average, taps, true}).values());
  const double fused_map = map_of(fused, ids, *manifest.relevance);
  out.require(fused_map >= worst_single, fmt("fused mAP %.4f below worst single %.4f", fused_map, worst_single));

  for (const auto& m : maps) {
    for (const char* tap : {"conv1", "conv2", "conv3"}) {
      const auto& original = m.at(tap);
      for (const auto [dx, dy] : {std::pair<Index, Index>{1, 0}, {0, 1}, {3, 2}}) {
        const auto shifted = cyclic_shift(original, dx % original.width(), dy % original.height());
        for (PoolingMode mode : {PoolingMode::Average, PoolingMode::Max}) {
          const auto a = layer_descriptor(original, mode).values();
          const auto b = layer_descriptor(shifted, mode).values();
          out.require(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0,
                      std::string("pooled ") + tap + " changed under a cyclic shift");
        }
      }
    }
  }
  if (out.pass) {
    out.detail = fmt("fused mAP %.4f >= worst single ", fused_map) + worst_tap + fmt(" %.4f; shifts bit-exact", worst_single);
  }
  return out;
}

LabeledSet blobs(int classes, int per_class, Index dim, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  LabeledSet set;
  set.class_count = classes;
  set.descriptors.resize(classes * per_class, dim);
  for (int c = 0; c < classes; ++c) {
    Vector<double> centre = Vector<double>::Zero(dim);
    centre[c % dim] = 10.0;
    centre[(c + 1) % dim] = 3.0 * (c / dim + 1);
    for (int m = 0; m < per_class; ++m) {
      const Index row = c * per_class + m;
      for (Index d = 0; d < dim; ++d) set.descriptors(row, d) = centre[d] + spread * g(rng);
      set.labels.push_back(c);
    }
  }
  return set;
}

Outcome classification() {
  Outcome out;
  const auto separable = run_protocol(blobs(8, 20, 10, 0.3, 1005), SplitSpec{5, 10, 0}, KnnConfig{5});
  const double acc = separable.metrics.at("accuracy");
  out.require(separable.split_accuracies.size() == 10 && acc == 1.0, fmt("blob accuracy %.4f", acc));

  LabeledSet shuffled = blobs(10, 60, 12, 0.5, 1006);
  std::mt19937_64 rng(1007);
  std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
  const double chance = run_protocol(shuffled, SplitSpec{20, 10, 1}, KnnConfig{5}).metrics.at("accuracy");
  out.require(std::abs(chance - 0.10) <= kChanceTol, fmt("shuffled accuracy %.4f", chance));

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index classes = 2 + trial % 15;
    CellMatrix<double> scores(25, classes);
    for (Index i = 0; i < scores.size(); ++i) scores.data()[i] = std::round(u(rng) * 8.0) / 8.0;
    std::vector<int> truth(25);
    for (auto& t : truth) t = static_cast<int>(u(rng) * static_cast<double>(classes)) % static_cast<int>(classes);
    double previous = 1.0;
    for (Index k = 1; k <= classes; ++k) {
      const double e = topk_error(scores, truth, k);
      out.require(e <= previous, "top-k error increased with k");
      previous = e;
    }
  }
  if (out.pass) out.detail = fmt("blobs %.3f; shuffled %.4f; 100 top-k matrices", acc, chance);
  return out;
}

TensorFormatError::Kind error_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const TensorFormatError& e) {
    return e.kind();
  }
  throw std::runtime_error("malformed bytes decoded");
}

std::vector<std::uint8_t> npy_bytes(std::string dict, std::size_t payload, char major = 1) {
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::string text = "\x93NUMPY";
  text.push_back(major);
  text.push_back('\0');
  text.push_back(static_cast<char>(dict.size() & 0xff));
  text.push_back(static_cast<char>(dict.size() >> 8));
  text += dict;
  text.append(payload, '\0');
  return {text.begin(), text.end()};
}

Outcome tensor_format() {
  Outcome out;
  std::mt19937_64 rng(1008);
  std::uniform_int_distribution<std::size_t> rank(0, 4), extent(0, 9);
  std::uniform_int_distribution<std::uint32_t> bits;
  const auto dir = std::filesystem::temp_directory_path() / ("layerpool_acceptance_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> shape(rank(rng));
    for (auto& s : shape) s = extent(rng);
    std::vector<float> data(shape_product(shape));
    for (auto& x : data) {
      std::uint32_t b = bits(rng);
      if ((b & 0x7f800000u) == 0x7f800000u) b &= 0xbfffffffu;  // keep it finite
      std::memcpy(&x, &b, sizeof x);
    }
    const Tensor tensor(shape, data);
    const auto path = dir / "t.npy";
    write_tensor(tensor, path);
    const Tensor back = read_tensor(path);
    const bool same = back.shape == shape && back.data.size() == data.size() &&
                      std::memcmp(back.data.data(), data.data(), data.size() * sizeof(float)) == 0 &&
                      encode_tensor(back) == encode_tensor(tensor);
    out.require(same, "tensor " + std::to_string(trial) + " changed after a round trip");
  }
  std::filesystem::remove_all(dir);

  using Kind = TensorFormatError::Kind;
  const std::string good = "{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }";
  const std::pair<std::vector<std::uint8_t>, Kind> cases[] = {
      {npy_bytes(good, 8, 2), Kind::UnsupportedVersion},
      {npy_bytes("{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }", 16), Kind::UnsupportedDtype},
      {npy_bytes("{'descr': '<f4', 'fortran_order': True, 'shape': (2,), }", 8), Kind::UnsupportedOrder},
      {npy_bytes(good, 7), Kind::TruncatedPayload},
      {npy_bytes(good, 12), Kind::TrailingData},
      {npy_bytes("{'descr': '<f4', 'shape': (2,), }", 8), Kind::MalformedHeader},
      {std::vector<std::uint8_t>{'N', 'U', 'M', 'P', 'Y', 1, 0, 0, 0, 0}, Kind::BadMagic},
  };
  for (const auto& [bytes, kind] : cases) {
    const Kind got = error_kind(bytes);
    out.require(got == kind, std::string("expected ") + to_string(kind) + ", got " + to_string(got));
  }
  if (out.pass) out.detail = "100 tensors byte-identical; 7 malformed headers classified";
  return out;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
  double budget_seconds;  // 0 for no budget
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"dimension identities", dimension_identities, kDimBudget},
      {"pooling oracle suite", pooling_oracles, kPoolBudget},
      {"normalization", normalization, 0},
      {"convolution/maxpool oracles", layer_oracles, 0},
      {"resize protocol", resize_protocol, 0},
      {"retrieval metrics", retrieval_metrics, 0},
      {"end-to-end synthetic retrieval", end_to_end, kEndToEndBudget},
      {"classification protocol", classification, 0},
      {"tensor format round trip", tensor_format, 0},
  };
  int failed = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.budget_seconds > 0 && seconds > criterion.budget_seconds) {
      outcome.require(false, fmt("took %.2f s, budget %.0f s", seconds, criterion.budget_seconds));
    }
    std::printf("%s  %-32s %8.3f s  %s\n", outcome.pass ? "PASS" : "FAIL", criterion.name, seconds,
                outcome.detail.c_str());
    failed += outcome.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed;
}
