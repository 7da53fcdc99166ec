#include <doctest.h>

#include <random>
#include <set>

#include "layerpool/classify.hpp"

using namespace layerpool;

namespace {

// `classes` isotropic Gaussian clusters with centres far apart relative to `spread`.
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

}  // namespace

TEST_CASE("labeled set validation") {
  LabeledSet set;
  set.descriptors = CellMatrix<double>::Zero(3, 2);
  set.labels = {0, 1, 2};
  set.class_count = 3;
  CHECK_NOTHROW(set.validate());
  set.labels[1] = 3;
  CHECK_THROWS_AS(set.validate(), InvalidInput);
  set.labels = {0, 1};
  CHECK_THROWS_AS(set.validate(), InvalidInput);
}

TEST_CASE("splits take exactly train_per_class from each class") {
  const LabeledSet set = blobs(4, 7, 3, 1.0, 1);
  const SplitSpec spec{3, 10, 99};
  for (int r = 0; r < 10; ++r) {
    const Split split = random_split(set, spec, r);
    CHECK(split.train.size() == 12);
    CHECK(split.test.size() == 16);
    std::vector<int> per_class(4, 0);
    for (Index i : split.train) ++per_class[static_cast<std::size_t>(set.labels[static_cast<std::size_t>(i)])];
    CHECK(per_class == std::vector<int>{3, 3, 3, 3});
    std::set<Index> all(split.train.begin(), split.train.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() == 28);
    CHECK(std::is_sorted(split.train.begin(), split.train.end()));
  }
  CHECK(random_split(set, spec, 4).train == random_split(set, spec, 4).train);
  CHECK(random_split(set, spec, 4).train != random_split(set, spec, 5).train);
  CHECK(random_split(set, spec, 4).train != random_split(set, SplitSpec{3, 10, 100}, 4).train);
  CHECK_THROWS_AS(random_split(set, SplitSpec{7, 1, 0}, 0), InvalidInput);
  CHECK_THROWS_AS(random_split(set, SplitSpec{0, 1, 0}, 0), InvalidInput);
}

TEST_CASE("every item is drawn for training at the expected rate") {
  const LabeledSet set = blobs(2, 8, 2, 1.0, 3);
  const SplitSpec spec{2, 1, 5};
  const int repeats = 8000;
  std::vector<int> counts(16, 0);
  for (int r = 0; r < repeats; ++r) {
    for (Index i : random_split(set, spec, r).train) ++counts[static_cast<std::size_t>(i)];
  }
  // p = 2/8; binomial sigma over 8000 draws is about 38.7
  for (int c : counts) CHECK(std::abs(c - repeats / 4.0) < 4.0 * std::sqrt(repeats * 0.25 * 0.75));
}

TEST_CASE("k-NN neighbour and vote tie rules") {
  LabeledSet train;
  train.class_count = 3;
  train.descriptors.resize(4, 2);
  train.descriptors << 1, 0, 1, 0, 0, 1, 0.6, 0.8;
  train.labels = {2, 1, 0, 0};
  CellMatrix<double> q(1, 2);
  q << 1, 0;
  // rows 0 and 1 tie; the lower row wins
  CHECK(knn_predict(train, q, 1).labels[0] == 2);
  // k=2: one vote each for classes 2 and 1 with equal similarity; lower class id
  CHECK(knn_predict(train, q, 2).labels[0] == 1);
  // k=3: row 3 (similarity 0.6) joins for class 0; 1-1-1 vote tie goes to the larger sum
  const auto p = knn_predict(train, q, 3);
  CHECK(p.labels[0] == 1);
  CHECK(p.class_scores(0, 0) == doctest::Approx(0.6));
  CHECK(p.class_scores(0, 1) == 1.0);
  // k=4 brings row 2 to class 0: two votes beat one
  CHECK(knn_predict(train, q, 4).labels[0] == 0);
  // k larger than the training set is clamped
  CHECK(knn_predict(train, q, 50).labels[0] == 0);

  CHECK_THROWS_AS(knn_predict(train, q, 0), InvalidInput);
  CHECK_THROWS_AS(knn_predict(train, CellMatrix<double>::Zero(1, 3), 1), InvalidInput);
}

TEST_CASE("vote ties with equal summed similarity go to the lower class") {
  LabeledSet train;
  train.class_count = 2;
  train.descriptors.resize(2, 2);
  train.descriptors << 0.6, 0.8, 0.8, 0.6;
  train.labels = {1, 0};
  CellMatrix<double> q(1, 2);
  q << 1, 1;
  const auto p = knn_predict(train, q, 2);
  CHECK(p.class_scores(0, 0) == p.class_scores(0, 1));
  CHECK(p.labels[0] == 0);
}

TEST_CASE("separable blobs are classified perfectly") {
  const LabeledSet set = blobs(6, 20, 8, 0.3, 11);
  const auto report = run_protocol(set, SplitSpec{5, 10, 0}, KnnConfig{5});
  CHECK(report.split_accuracies.size() == 10);
  CHECK(report.metrics.at("accuracy") == 1.0);
  CHECK(report.metrics.at("accuracy_std") == 0.0);
  CHECK(report.label == "cosine-kNN(k=5)");
}

TEST_CASE("shuffled labels fall to chance") {
  LabeledSet set = blobs(10, 60, 12, 0.5, 21);
  std::mt19937_64 rng(4);
  std::shuffle(set.labels.begin(), set.labels.end(), rng);
  const auto report = run_protocol(set, SplitSpec{20, 10, 1}, KnnConfig{5});
  CHECK(std::abs(report.metrics.at("accuracy") - 0.10) <= 0.03);
}

TEST_CASE("protocol is deterministic in the seed") {
  LabeledSet set = blobs(3, 15, 4, 4.0, 8);
  const auto a = run_protocol(set, SplitSpec{4, 5, 77}, KnnConfig{3});
  const auto b = run_protocol(set, SplitSpec{4, 5, 77}, KnnConfig{3});
  CHECK(a.split_accuracies == b.split_accuracies);
}

TEST_CASE("accuracy and argmax") {
  const std::vector<int> pred{0, 1, 2, 2};
  const std::vector<int> truth{0, 1, 1, 2};
  CHECK(accuracy(pred, truth) == 0.75);
  CHECK_THROWS_AS(accuracy(pred, std::vector<int>{0}), InvalidInput);
  CellMatrix<double> scores(2, 3);
  scores << 0.1, 0.5, 0.5, 2, 1, 0;
  CHECK(argmax_predict(scores) == std::vector<int>{1, 0});
}

TEST_CASE("top-k error by hand") {
  CellMatrix<double> scores(3, 4);
  scores << 0.1, 0.4, 0.3, 0.2,  // truth 2 ranks second
      0.5, 0.5, 0.0, 0.0,        // truth 1 ties with class 0, ranks second
      0.9, 0.0, 0.0, 0.1;        // truth 0 ranks first
  const std::vector<int> truth{2, 1, 0};
  CHECK(topk_error(scores, truth, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(topk_error(scores, truth, 2) == 0.0);
  CHECK(topk_error(scores, truth, 4) == 0.0);
  CHECK_THROWS_AS(topk_error(scores, truth, 0), InvalidInput);
  CHECK_THROWS_AS(topk_error(scores, truth, 5), InvalidInput);
}

TEST_CASE("top-k error is non-increasing in k and zero at k = classes") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    CellMatrix<double> scores(30, 10);
    for (Index i = 0; i < scores.size(); ++i) scores.data()[i] = std::round(u(rng) * 5.0) / 5.0;
    std::vector<int> truth(30);
    for (auto& t : truth) t = cls(rng);
    double previous = 1.0;
    for (Index k = 1; k <= 10; ++k) {
      const double e = topk_error(scores, truth, k);
      CHECK(e <= previous);
      previous = e;
    }
    CHECK(previous == 0.0);
    CHECK(topk_error(scores, truth, 1) == doctest::Approx(1.0 - accuracy(argmax_predict(scores), truth)));
  }
}
