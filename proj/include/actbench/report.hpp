#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "actbench/training.hpp"

namespace actbench {

/// Run report as pretty-printed JSON. Wall-clock timings are left out so
/// that identical runs give identical bytes; see timing_json.
std::string report_json(const RunReport& report);

/// Per-epoch seconds for the same run.
std::string timing_json(const RunReport& report);

/// Parses report_json output. `source` names the input in FormatError
/// messages.
RunReport parse_report(std::string_view text, const std::string& source);

/// "<arch>_<activation>_seed<seed>", the stem of a run's report files.
std::string report_stem(const RunReport& report);

/// Writes <stem>.json and <stem>.timing.json under `dir`; returns the
/// report path.
std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& dir);

/// Reads a report and, when present, its timing sidecar.
RunReport read_report(const std::filesystem::path& path);

/// Report files (not timing sidecars) directly under `dir`, sorted by name.
std::vector<std::filesystem::path> list_reports(const std::filesystem::path& dir);

/// Long table with header activation,metric,mean,max,rank.
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

/// activation,lr_min,lr_max,runs
void write_lr_range_csv(const std::vector<RunReport>& reports, const std::filesystem::path& path);

/// One row per activation with <metric>_mean, <metric>_max and
/// <metric>_rank columns, plus run and failure counts.
void write_benchmark_csv(const std::vector<RunReport>& reports, const std::vector<std::string>& failed,
                         const std::filesystem::path& path);

}  // namespace actbench
