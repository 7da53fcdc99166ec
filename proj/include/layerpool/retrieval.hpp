#pragma once

/**
 * @file retrieval.hpp
 *
 * @brief Exhaustive cosine search, score-level late fusion and the search
 * metrics (average precision, mAP, N-S score).
 */

#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "layerpool/report.hpp"
#include "layerpool/tensor.hpp"

namespace layerpool {

/// Rows are l2-normalized on construction (all-zero rows stay zero); ids must be unique.
class DescriptorIndex {
 public:
  DescriptorIndex(CellMatrix<double> rows, std::vector<std::string> ids);

  Index size() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  const CellMatrix<double>& rows() const { return rows_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<Index> position(const std::string& id) const;
  Vector<double> row(Index i) const { return rows_.row(i).transpose(); }

 private:
  CellMatrix<double> rows_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> positions_;
};

DescriptorIndex build_index(CellMatrix<double> rows, std::vector<std::string> ids);

struct RankedEntry {
  std::string id;
  double score = 0.0;
};

/// Entries in descending score order, ties by ascending id.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

/// Orders (score desc, id asc).
bool ranks_before(const RankedEntry& a, const RankedEntry& b);

struct SearchOptions {
  std::string query_id;
  /// Drop the row whose id equals query_id from the ranking.
  bool exclude_self = false;
};

/// Top-k rows by inner product with the l2-normalized query. k is clamped to
/// the number of rankable rows; k < 1 or a dimension mismatch throws.
RankedList search(const Vector<double>& query, const DescriptorIndex& index, Index k,
                  const SearchOptions& options = {});

/**
 * Weighted sum of min-max normalized scores: fused(id) = sum_l w_l * minmax_l(id),
 * where an id missing from list l contributes 0 and a list with a single
 * distinct score maps its entries to 1. All lists must share the query id.
 */
RankedList late_fuse(std::span<const RankedList> lists, std::span<const double> weights);

/**
 * @brief Which database items are relevant to which query.
 *
 * JSON: {"queries": [{"id": "q", "relevant": ["a", "b"]}],
 *        "groups": [["a", "b", "c", "d"], ...], "exclude_self": true}
 *
 * With only groups, every group member is a query whose relevant set is its
 * group (minus itself when exclude_self). exclude_self defaults to true for
 * query-list manifests and false for group-only manifests.
 */
struct RelevanceManifest {
  struct Query {
    std::string id;
    std::set<std::string> relevant;
  };

  std::vector<Query> queries;
  std::vector<std::vector<std::string>> groups;
  bool exclude_self = true;

  /// Explicit queries, or the group-derived ones when none are listed.
  std::vector<Query> effective_queries() const;
  const std::vector<std::string>* group_of(const std::string& id) const;
  void validate() const;

  static RelevanceManifest from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// (1/|relevant|) * sum over relevant hits at rank r of hits_so_far / r.
double average_precision(const RankedList& ranked, const std::set<std::string>& relevant);

/// Number of the query's group members among the first four entries.
int top4_hits(const RankedList& ranked, std::span<const std::string> group);

double mean_ap(const RelevanceManifest& manifest, std::span<const RankedList> lists);

/// Mean top-4 hits over the lists; every query's group must have exactly 4 members.
double ns_score(const RelevanceManifest& manifest, std::span<const RankedList> lists);

/// Ranks the whole index for every effective query; each query id must be in the index.
std::vector<RankedList> rank_queries(const DescriptorIndex& index, const RelevanceManifest& manifest);

/// As rank_queries over several indexes with the same ids, fused with late_fuse.
std::vector<RankedList> rank_queries_fused(std::span<const DescriptorIndex> indexes,
                                           std::span<const double> weights,
                                           const RelevanceManifest& manifest);

/// Per-query AP (and top-4 hits when every query has a group of 4) plus summary metrics.
EvalReport evaluate_search(const RelevanceManifest& manifest, std::span<const RankedList> lists,
                           std::string label = {}, std::string fingerprint = {});

}  // namespace layerpool
