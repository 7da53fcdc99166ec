#pragma once

/**
 * @file classify.hpp
 *
 * @brief Repeated random-split classification with a cosine k-NN classifier.
 */

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layerpool/report.hpp"
#include "layerpool/tensor.hpp"

namespace layerpool {

struct LabeledSet {
  CellMatrix<double> descriptors;  ///< one row per item
  std::vector<int> labels;
  int class_count = 0;

  Index size() const { return descriptors.rows(); }
  /// Labels in [0, class_count), one per row, and at least class_count rows.
  void validate() const;
  LabeledSet subset(std::span<const Index> rows) const;
};

struct SplitSpec {
  Index train_per_class = 1;
  int repeats = 10;
  std::uint64_t seed = 0;
};

/// Row indices, each list ascending.
struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Exactly train_per_class random rows of every class go to train, the rest to
/// test. Deterministic in (spec.seed, repeat_index).
Split random_split(const LabeledSet& set, const SplitSpec& spec, int repeat_index);

struct KnnConfig {
  Index k = 5;
  std::string label() const;
};

struct Prediction {
  std::vector<int> labels;
  /// queries x class_count; summed cosine similarity of in-class neighbours.
  CellMatrix<double> class_scores;
};

/**
 * Majority vote over the k most similar training rows (cosine similarity,
 * neighbour ties by lower training row). Vote ties go to the larger summed
 * similarity, then to the lower class id.
 */
Prediction knn_predict(const LabeledSet& train, const CellMatrix<double>& queries, Index k);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Highest-scoring class per row, ties to the lower class id.
std::vector<int> argmax_predict(const CellMatrix<double>& scores);

/**
 * Fraction of rows whose true class is not among the k best. A class ranks
 * above the true class when its score is higher, or equal with a lower id.
 */
double topk_error(const CellMatrix<double>& scores, std::span<const int> truth, Index k);

/// One k-NN run per repeat; the report keeps each split's accuracy.
EvalReport run_protocol(const LabeledSet& set, const SplitSpec& spec, const KnnConfig& classifier,
                        std::string fingerprint = {});

}  // namespace layerpool
