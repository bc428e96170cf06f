#pragma once

#include <string>

#include "fedobd/orchestrator.hpp"

namespace fedobd {

/// Pretty-printed JSON with a fixed key order. Contributions are not embedded;
/// they are written separately as a line-delimited log.
std::string report_to_json(const RunReport& report, const std::string& contribution_log_name);

/// Parsed view of a report.json, enough for offline inspection.
struct ReportSummary {
  std::string algorithm;
  std::string contribution_log;
  std::uint64_t raw_model_bytes = 0;
  std::uint64_t total_bytes = 0;
  std::vector<RoundRecord> rounds;
  Metrics final_metrics;
};

/// Throws InvalidInput on malformed documents.
ReportSummary parse_report(const std::string& json_text);

/// Per-round table: round, stage, epochs, upload, download, cumulative bytes,
/// loss, accuracy, macro F1. Locale-independent, fixed column order.
std::string metrics_csv(const RunReport& report);

/// Shortest round-trip decimal form (std::to_chars), independent of locale.
std::string format_number(double v);
std::string format_fixed(double v, int decimals);

}  // namespace fedobd
