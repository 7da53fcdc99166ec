#include "layerpool/classify.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "layerpool/parallel.hpp"

namespace layerpool {

void LabeledSet::validate() const {
  if (class_count <= 0) throw InvalidInput("labeled set needs a positive class count");
  if (static_cast<Index>(labels.size()) != descriptors.rows()) {
    throw InvalidInput("labeled set has " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(descriptors.rows()) + " rows");
  }
  if (descriptors.rows() < class_count) throw InvalidInput("labeled set has fewer rows than classes");
  for (int label : labels) {
    if (label < 0 || label >= class_count) {
      throw InvalidInput("label " + std::to_string(label) + " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

LabeledSet LabeledSet::subset(std::span<const Index> rows) const {
  LabeledSet out;
  out.class_count = class_count;
  out.descriptors.resize(static_cast<Index>(rows.size()), descriptors.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.descriptors.row(static_cast<Index>(i)) = descriptors.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

namespace {

std::uint64_t bounded(std::mt19937_64& engine, std::uint64_t range) {
  // Rejection sampling keeps the draw unbiased and library-independent.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % range;
}

}  // namespace

Split random_split(const LabeledSet& set, const SplitSpec& spec, int repeat_index) {
  set.validate();
  if (spec.train_per_class < 1) throw InvalidInput("train_per_class must be positive");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(set.class_count));
  for (Index i = 0; i < set.size(); ++i) by_class[static_cast<std::size_t>(set.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (static_cast<Index>(by_class[c].size()) <= spec.train_per_class) {
      throw InvalidInput("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                         " items; need more than train_per_class = " + std::to_string(spec.train_per_class));
    }
  }

  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(repeat_index)};
  std::mt19937_64 engine(seq);
  Split split;
  for (auto& members : by_class) {
    for (std::size_t i = members.size() - 1; i > 0; --i) {
      std::swap(members[i], members[bounded(engine, i + 1)]);
    }
    const auto cut = members.begin() + spec.train_per_class;
    split.train.insert(split.train.end(), members.begin(), cut);
    split.test.insert(split.test.end(), cut, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string KnnConfig::label() const { return "cosine-kNN(k=" + std::to_string(k) + ")"; }

namespace {

CellMatrix<double> unit_rows(const CellMatrix<double>& rows) {
  CellMatrix<double> out = rows;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

}  // namespace

Prediction knn_predict(const LabeledSet& train, const CellMatrix<double>& queries, Index k) {
  if (k < 1) throw InvalidInput("k-NN needs k >= 1");
  if (train.size() == 0) throw InvalidInput("k-NN needs a non-empty training set");
  if (train.class_count <= 0) throw InvalidInput("k-NN needs a positive class count");
  if (queries.cols() != train.descriptors.cols()) {
    throw InvalidInput("query dimension does not match training descriptors");
  }
  const CellMatrix<double> similarity = unit_rows(queries) * unit_rows(train.descriptors).transpose();
  const Index neighbours = std::min(k, train.size());

  Prediction out;
  out.labels.resize(static_cast<std::size_t>(queries.rows()));
  out.class_scores = CellMatrix<double>::Zero(queries.rows(), train.class_count);
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::vector<int> votes(static_cast<std::size_t>(train.class_count));
  for (Index q = 0; q < queries.rows(); ++q) {
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + neighbours, order.end(), [&](Index a, Index b) {
      if (similarity(q, a) != similarity(q, b)) return similarity(q, a) > similarity(q, b);
      return a < b;
    });
    std::fill(votes.begin(), votes.end(), 0);
    for (Index n = 0; n < neighbours; ++n) {
      const Index row = order[static_cast<std::size_t>(n)];
      const int label = train.labels[static_cast<std::size_t>(row)];
      ++votes[static_cast<std::size_t>(label)];
      out.class_scores(q, label) += similarity(q, row);
    }
    int best = 0;
    for (int c = 1; c < train.class_count; ++c) {
      const auto cv = votes[static_cast<std::size_t>(c)];
      const auto bv = votes[static_cast<std::size_t>(best)];
      if (cv > bv || (cv == bv && out.class_scores(q, c) > out.class_scores(q, best))) best = c;
    }
    out.labels[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("prediction and truth lengths differ");
  if (truth.empty()) throw InvalidInput("accuracy of an empty prediction set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<int> argmax_predict(const CellMatrix<double>& scores) {
  if (scores.cols() == 0) throw InvalidInput("argmax over zero classes");
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index r = 0; r < scores.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double topk_error(const CellMatrix<double>& scores, std::span<const int> truth, Index k) {
  if (k < 1 || k > scores.cols()) {
    throw InvalidInput("top-k error needs 1 <= k <= " + std::to_string(scores.cols()));
  }
  if (static_cast<Index>(truth.size()) != scores.rows() || truth.empty()) {
    throw InvalidInput("score matrix and truth lengths differ");
  }
  std::size_t misses = 0;
  for (Index r = 0; r < scores.rows(); ++r) {
    const int t = truth[static_cast<std::size_t>(r)];
    if (t < 0 || t >= scores.cols()) throw InvalidInput("truth label outside the score columns");
    Index above = 0;
    for (Index c = 0; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, t) || (scores(r, c) == scores(r, t) && c < t)) ++above;
    }
    if (above >= k) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(scores.rows());
}

EvalReport run_protocol(const LabeledSet& set, const SplitSpec& spec, const KnnConfig& classifier,
                        std::string fingerprint) {
  set.validate();
  if (spec.repeats < 1) throw InvalidInput("protocol needs at least one repeat");
  EvalReport report;
  report.task = "classify";
  report.label = classifier.label();
  report.fingerprint = std::move(fingerprint);
  report.split_accuracies.resize(static_cast<std::size_t>(spec.repeats));
  parallel_for(static_cast<std::size_t>(spec.repeats), [&](std::size_t r) {
    const Split split = random_split(set, spec, static_cast<int>(r));
    const LabeledSet train = set.subset(split.train);
    const LabeledSet test = set.subset(split.test);
    const Prediction prediction = knn_predict(train, test.descriptors, classifier.k);
    report.split_accuracies[r] = accuracy(prediction.labels, test.labels);
  });
  summarize(report);
  return report;
}

}  // namespace layerpool
