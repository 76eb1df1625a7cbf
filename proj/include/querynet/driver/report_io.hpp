#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "querynet/driver/attack.hpp"

namespace querynet::driver {

class ReportParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header fields written next to the metrics.
struct ReportMeta {
  std::string variant;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
};

/// Missing A.Q./M.Q. are written as null.
std::string report_json(const RunReport& report, const ReportMeta& meta);
void write_samples_csv(std::ostream& out, const RunReport& report);
void write_curve_csv(std::ostream& out, const RunReport& report);
std::string trace_line(const core::TraceRecord& record);

/// Writes report.json, samples.csv, curve.csv and trace.jsonl into `dir`.
void write_run(const std::filesystem::path& dir, const AttackResult& result, const ReportMeta& meta);

/// The fields the comparison table needs from a report.json.
struct ReportSummary {
  ReportMeta meta;
  double accuracy = 0.0;
  std::optional<double> mean_queries;
  std::optional<double> median_queries;
  std::size_t successes = 0;
  std::size_t attacked = 0;
};

/// Throws ReportParseError naming the file on malformed content.
ReportSummary read_report(const std::filesystem::path& file);

}  // namespace querynet::driver
