#include "layerpool/report.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "layerpool/error.hpp"

namespace layerpool {

void summarize(EvalReport& report) {
  report.metrics.clear();
  if (report.task == "search") {
    if (report.queries.empty()) return;
    double ap_sum = 0.0;
    double hit_sum = 0.0;
    bool all_hits = true;
    for (const auto& q : report.queries) {
      ap_sum += q.average_precision;
      if (q.top4_hits) {
        hit_sum += *q.top4_hits;
      } else {
        all_hits = false;
      }
    }
    const double n = static_cast<double>(report.queries.size());
    report.metrics["mAP"] = ap_sum / n;
    if (all_hits) report.metrics["N-S"] = hit_sum / n;
  } else if (report.task == "classify") {
    const auto& acc = report.split_accuracies;
    if (acc.empty()) return;
    double sum = 0.0;
    for (double a : acc) sum += a;
    const double mean = sum / static_cast<double>(acc.size());
    double sq = 0.0;
    for (double a : acc) sq += (a - mean) * (a - mean);
    report.metrics["accuracy"] = mean;
    report.metrics["accuracy_std"] = acc.size() > 1 ? std::sqrt(sq / static_cast<double>(acc.size() - 1)) : 0.0;
  } else {
    throw InvalidInput("unknown report task '" + report.task + "'");
  }
}

EvalReport merge_reports(std::span<const EvalReport> reports) {
  if (reports.empty()) throw InvalidInput("nothing to merge");
  EvalReport merged = reports.front();
  for (const auto& other : reports.subspan(1)) {
    if (other.fingerprint != merged.fingerprint) {
      throw InvalidInput("refusing to merge reports with fingerprints " + merged.fingerprint +
                         " and " + other.fingerprint);
    }
    if (other.task != merged.task) throw InvalidInput("refusing to merge reports of different tasks");
    merged.queries.insert(merged.queries.end(), other.queries.begin(), other.queries.end());
    merged.split_accuracies.insert(merged.split_accuracies.end(), other.split_accuracies.begin(),
                                   other.split_accuracies.end());
  }
  std::set<std::string> seen;
  for (const auto& q : merged.queries) {
    if (!seen.insert(q.query_id).second) {
      throw InvalidInput("query '" + q.query_id + "' appears in more than one merged report");
    }
  }
  summarize(merged);
  return merged;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json doc{{"task", report.task},
                     {"label", report.label},
                     {"fingerprint", report.fingerprint},
                     {"metrics", report.metrics}};
  if (report.task == "search") {
    auto& queries = doc["queries"] = nlohmann::json::array();
    for (const auto& q : report.queries) {
      nlohmann::json entry{{"id", q.query_id}, {"ap", q.average_precision}};
      if (q.top4_hits) entry["top4_hits"] = *q.top4_hits;
      queries.push_back(std::move(entry));
    }
  } else {
    doc["split_accuracies"] = report.split_accuracies;
  }
  return doc;
}

EvalReport report_from_json(const nlohmann::json& doc) {
  try {
    EvalReport report;
    report.task = doc.at("task").get<std::string>();
    report.label = doc.value("label", std::string{});
    report.fingerprint = doc.value("fingerprint", std::string{});
    if (doc.contains("queries")) {
      for (const auto& entry : doc.at("queries")) {
        QueryOutcome q;
        q.query_id = entry.at("id").get<std::string>();
        q.average_precision = entry.at("ap").get<double>();
        if (entry.contains("top4_hits")) q.top4_hits = entry.at("top4_hits").get<int>();
        report.queries.push_back(std::move(q));
      }
    }
    if (doc.contains("split_accuracies")) {
      report.split_accuracies = doc.at("split_accuracies").get<std::vector<double>>();
    }
    summarize(report);
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed report JSON: ") + e.what());
  }
}

std::string report_table(std::span<const EvalReport> reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  auto pad = [](std::string text, std::size_t n) {
    text.resize(std::max(n, text.size()), ' ');
    return text;
  };
  auto cell = [](const EvalReport& r, const char* key, double scale, const char* format) {
    const auto it = r.metrics.find(key);
    if (it == r.metrics.end()) return std::string("      -");
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, format, it->second * scale);
    return std::string(buffer);
  };
  std::string out = pad("Method", width) + " |  mAP(%) |    N-S |  Acc(%) |  Std(%)\n";
  out += std::string(width, '-') + "-+---------+--------+---------+--------\n";
  for (const auto& r : reports) {
    out += pad(r.label, width) + " | " + pad(cell(r, "mAP", 100.0, "%7.1f"), 7) + " | " +
           pad(cell(r, "N-S", 1.0, "%6.2f"), 6) + " | " + pad(cell(r, "accuracy", 100.0, "%7.1f"), 7) +
           " | " + cell(r, "accuracy_std", 100.0, "%6.2f") + "\n";
  }
  return out;
}

}  // namespace layerpool
