#include "layerpool/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "layerpool/parallel.hpp"

namespace layerpool {

DescriptorIndex::DescriptorIndex(CellMatrix<double> rows, std::vector<std::string> ids)
    : rows_(std::move(rows)), ids_(std::move(ids)) {
  if (static_cast<Index>(ids_.size()) != rows_.rows()) {
    throw InvalidInput("index has " + std::to_string(ids_.size()) + " ids for " +
                       std::to_string(rows_.rows()) + " rows");
  }
  if (!rows_.allFinite()) throw InvalidInput("index rows contain non-finite values");
  for (Index i = 0; i < rows_.rows(); ++i) {
    const double norm = rows_.row(i).norm();
    if (norm > 0.0) rows_.row(i) /= norm;
    if (!positions_.emplace(ids_[static_cast<std::size_t>(i)], i).second) {
      throw InvalidInput("duplicate id '" + ids_[static_cast<std::size_t>(i)] + "' in index");
    }
  }
}

std::optional<Index> DescriptorIndex::position(const std::string& id) const {
  const auto it = positions_.find(id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

DescriptorIndex build_index(CellMatrix<double> rows, std::vector<std::string> ids) {
  return DescriptorIndex(std::move(rows), std::move(ids));
}

bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

RankedList search(const Vector<double>& query, const DescriptorIndex& index, Index k,
                  const SearchOptions& options) {
  if (k < 1) throw InvalidInput("search needs k >= 1");
  if (query.size() != index.dim()) {
    throw InvalidInput("query has dimension " + std::to_string(query.size()) + ", index has " +
                       std::to_string(index.dim()));
  }
  if (!query.allFinite()) throw InvalidInput("query contains non-finite values");
  const double norm = query.norm();
  const Vector<double> unit = norm > 0.0 ? Vector<double>(query / norm) : query;
  const Vector<double> scores = index.rows() * unit;

  std::vector<RankedEntry> entries;
  entries.reserve(static_cast<std::size_t>(index.size()));
  for (Index i = 0; i < index.size(); ++i) {
    const auto& id = index.ids()[static_cast<std::size_t>(i)];
    if (options.exclude_self && id == options.query_id) continue;
    entries.push_back({id, scores[i]});
  }
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(),
                    ranks_before);
  entries.resize(keep);
  return RankedList{options.query_id, std::move(entries)};
}

RankedList late_fuse(std::span<const RankedList> lists, std::span<const double> weights) {
  if (lists.empty()) throw InvalidInput("late_fuse needs at least one ranked list");
  if (lists.size() != weights.size()) {
    throw InvalidInput("late_fuse got " + std::to_string(weights.size()) + " weights for " +
                       std::to_string(lists.size()) + " lists");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("fusion weights must be non-negative");
    weight_sum += w;
  }
  if (!(weight_sum > 0.0)) throw InvalidInput("fusion weights must not all be zero");

  std::map<std::string, double> fused;
  for (std::size_t l = 0; l < lists.size(); ++l) {
    const auto& list = lists[l];
    if (list.query_id != lists.front().query_id) {
      throw InvalidInput("late_fuse lists belong to different queries");
    }
    for (const auto& e : list.entries) fused.try_emplace(e.id, 0.0);
    if (list.entries.empty()) continue;
    const auto [lo, hi] = std::minmax_element(
        list.entries.begin(), list.entries.end(),
        [](const RankedEntry& a, const RankedEntry& b) { return a.score < b.score; });
    const double min = lo->score;
    const double range = hi->score - min;
    for (const auto& e : list.entries) {
      const double normalized = range > 0.0 ? (e.score - min) / range : 1.0;
      fused[e.id] += weights[l] * normalized;
    }
  }

  RankedList out{lists.front().query_id, {}};
  out.entries.reserve(fused.size());
  for (const auto& [id, score] : fused) out.entries.push_back({id, score});
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  return out;
}

std::vector<RelevanceManifest::Query> RelevanceManifest::effective_queries() const {
  if (!queries.empty()) return queries;
  std::vector<Query> derived;
  for (const auto& group : groups) {
    for (const auto& id : group) {
      Query q{id, {group.begin(), group.end()}};
      if (exclude_self) q.relevant.erase(id);
      derived.push_back(std::move(q));
    }
  }
  return derived;
}

const std::vector<std::string>* RelevanceManifest::group_of(const std::string& id) const {
  for (const auto& group : groups) {
    if (std::find(group.begin(), group.end(), id) != group.end()) return &group;
  }
  return nullptr;
}

void RelevanceManifest::validate() const {
  std::set<std::string> query_ids;
  for (const auto& q : effective_queries()) {
    if (q.relevant.empty()) throw InvalidInput("query '" + q.id + "' has no relevant items");
    if (!query_ids.insert(q.id).second) throw InvalidInput("duplicate query '" + q.id + "'");
  }
  std::set<std::string> members;
  for (const auto& group : groups) {
    if (group.empty()) throw InvalidInput("empty relevance group");
    for (const auto& id : group) {
      if (!members.insert(id).second) throw InvalidInput("id '" + id + "' is in more than one group");
    }
  }
  if (queries.empty() && groups.empty()) throw InvalidInput("manifest defines no queries or groups");
}

RelevanceManifest RelevanceManifest::from_json(const nlohmann::json& doc) {
  try {
    RelevanceManifest manifest;
    if (doc.contains("queries")) {
      for (const auto& entry : doc.at("queries")) {
        Query q;
        q.id = entry.at("id").get<std::string>();
        const auto relevant = entry.at("relevant").get<std::vector<std::string>>();
        q.relevant.insert(relevant.begin(), relevant.end());
        manifest.queries.push_back(std::move(q));
      }
    }
    if (doc.contains("groups")) {
      manifest.groups = doc.at("groups").get<std::vector<std::vector<std::string>>>();
    }
    manifest.exclude_self = doc.value("exclude_self", !manifest.queries.empty() || manifest.groups.empty());
    manifest.validate();
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed relevance manifest: ") + e.what());
  }
}

nlohmann::json RelevanceManifest::to_json() const {
  nlohmann::json doc{{"exclude_self", exclude_self}};
  if (!queries.empty()) {
    auto& list = doc["queries"] = nlohmann::json::array();
    for (const auto& q : queries) {
      list.push_back({{"id", q.id}, {"relevant", std::vector<std::string>(q.relevant.begin(), q.relevant.end())}});
    }
  }
  if (!groups.empty()) doc["groups"] = groups;
  return doc;
}

double average_precision(const RankedList& ranked, const std::set<std::string>& relevant) {
  if (relevant.empty()) throw InvalidInput("average_precision needs a non-empty relevant set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
    if (relevant.count(ranked.entries[r].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

int top4_hits(const RankedList& ranked, std::span<const std::string> group) {
  int hits = 0;
  const std::size_t depth = std::min<std::size_t>(4, ranked.entries.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::find(group.begin(), group.end(), ranked.entries[r].id) != group.end()) ++hits;
  }
  return hits;
}

namespace {

std::map<std::string, const RankedList*> by_query(std::span<const RankedList> lists) {
  std::map<std::string, const RankedList*> out;
  for (const auto& list : lists) {
    if (!out.emplace(list.query_id, &list).second) {
      throw InvalidInput("more than one ranked list for query '" + list.query_id + "'");
    }
  }
  return out;
}

const RankedList& list_for(const std::map<std::string, const RankedList*>& lists, const std::string& id) {
  const auto it = lists.find(id);
  if (it == lists.end()) throw InvalidInput("no ranked list for query '" + id + "'");
  return *it->second;
}

const std::vector<std::string>& group_of_four(const RelevanceManifest& manifest, const std::string& id) {
  const auto* group = manifest.group_of(id);
  if (!group) throw InvalidInput("query '" + id + "' belongs to no group");
  if (group->size() != 4) {
    throw InvalidInput("N-S score needs groups of 4; query '" + id + "' has a group of " +
                       std::to_string(group->size()));
  }
  return *group;
}

}  // namespace

double mean_ap(const RelevanceManifest& manifest, std::span<const RankedList> lists) {
  const auto queries = manifest.effective_queries();
  if (queries.empty()) throw InvalidInput("mean_ap needs at least one query");
  const auto index = by_query(lists);
  double sum = 0.0;
  for (const auto& q : queries) sum += average_precision(list_for(index, q.id), q.relevant);
  return sum / static_cast<double>(queries.size());
}

double ns_score(const RelevanceManifest& manifest, std::span<const RankedList> lists) {
  if (lists.empty()) throw InvalidInput("ns_score needs at least one ranked list");
  double sum = 0.0;
  for (const auto& list : lists) sum += top4_hits(list, group_of_four(manifest, list.query_id));
  return sum / static_cast<double>(lists.size());
}

std::vector<RankedList> rank_queries(const DescriptorIndex& index, const RelevanceManifest& manifest) {
  const double weight = 1.0;
  return rank_queries_fused(std::span<const DescriptorIndex>(&index, 1), std::span<const double>(&weight, 1),
                            manifest);
}

std::vector<RankedList> rank_queries_fused(std::span<const DescriptorIndex> indexes,
                                           std::span<const double> weights,
                                           const RelevanceManifest& manifest) {
  if (indexes.empty()) throw InvalidInput("no descriptor index to rank");
  for (const auto& index : indexes) {
    if (index.ids() != indexes.front().ids()) {
      throw InvalidInput("fused indexes must list the same ids in the same order");
    }
  }
  const auto queries = manifest.effective_queries();
  std::vector<RankedList> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t qi) {
    const auto& q = queries[qi];
    const auto row = indexes.front().position(q.id);
    if (!row) throw InvalidInput("query '" + q.id + "' is not in the index");
    const SearchOptions options{q.id, manifest.exclude_self};
    if (indexes.size() == 1) {
      out[qi] = search(indexes.front().row(*row), indexes.front(), indexes.front().size(), options);
      return;
    }
    std::vector<RankedList> per_layer;
    per_layer.reserve(indexes.size());
    for (const auto& index : indexes) per_layer.push_back(search(index.row(*row), index, index.size(), options));
    out[qi] = late_fuse(per_layer, weights);
  });
  return out;
}

EvalReport evaluate_search(const RelevanceManifest& manifest, std::span<const RankedList> lists,
                           std::string label, std::string fingerprint) {
  const auto queries = manifest.effective_queries();
  const auto index = by_query(lists);
  bool grouped = !manifest.groups.empty();
  for (const auto& q : queries) {
    const auto* group = manifest.group_of(q.id);
    if (!group || group->size() != 4) grouped = false;
  }
  EvalReport report;
  report.task = "search";
  report.label = std::move(label);
  report.fingerprint = std::move(fingerprint);
  for (const auto& q : queries) {
    const RankedList& list = list_for(index, q.id);
    QueryOutcome outcome{q.id, average_precision(list, q.relevant), std::nullopt};
    if (grouped) outcome.top4_hits = top4_hits(list, *manifest.group_of(q.id));
    report.queries.push_back(std::move(outcome));
  }
  summarize(report);
  return report;
}

}  // namespace layerpool
