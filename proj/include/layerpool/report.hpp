#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace layerpool {

struct QueryOutcome {
  std::string query_id;
  double average_precision = 0.0;
  /// |top-4 ∩ group|, present only for group (4-per-object) manifests.
  std::optional<int> top4_hits;
};

/**
 * @brief Evaluation results for one configuration.
 *
 * `metrics` is always derived from the per-query or per-split lists by
 * summarize(): search reports carry "mAP" (and "N-S" when every query has
 * top-4 hits), classification reports carry "accuracy" and "accuracy_std".
 */
struct EvalReport {
  std::string task;  ///< "search" or "classify"
  std::string label;
  std::string fingerprint;
  std::map<std::string, double> metrics;
  std::vector<QueryOutcome> queries;
  std::vector<double> split_accuracies;
};

void summarize(EvalReport& report);

/// Concatenates the per-query / per-split lists of reports produced by the
/// same configuration. Throws InvalidInput when fingerprints or tasks differ.
EvalReport merge_reports(std::span<const EvalReport> reports);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// One row per report: label, then mAP (%) / N-S / accuracy (%) columns.
std::string report_table(std::span<const EvalReport> reports);

}  // namespace layerpool
