#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actbench/activations.hpp"
#include "actbench/snapshot.hpp"

namespace actbench {

/// Box-plot summary. Quartiles use linear interpolation between closest
/// ranks. `min`/`max` are the whisker ends: the most extreme values inside
/// [q1 − 1.5·IQR, q3 + 1.5·IQR], clamped to the box. Values outside that
/// range are outliers.
struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::vector<double> outliers;
  std::size_t n = 0;
};

/// Linear-interpolation quantile of already sorted values, p in [0, 1].
double sorted_quantile(std::span<const double> sorted, double p);

BoxStats box_stats(std::span<const double> values);

/// Snapshots of one trained run.
struct RunSnapshots {
  std::string activation;
  std::uint64_t seed = 0;
  std::vector<ParamSnapshot> sites;
};

/// Values of one parameter gathered over all runs at one (block, slot) cell.
struct BlockCell {
  std::size_t block = 0;
  SiteSlot slot = SiteSlot::kA1;
  std::vector<std::string> names;
  /// values[j] holds every value of parameter names[j] in this cell.
  std::vector<std::vector<double>> values;
  std::size_t sites = 0;

  const std::vector<double>* find(const std::string& name) const;
};

struct BlockGrouping {
  bool available = false;
  std::size_t num_blocks = 0;
  /// Ordered by block then slot (A-1 before A-2).
  std::vector<BlockCell> cells;
  /// In-block sites placed into the grid.
  std::size_t grouped_sites = 0;
  /// Stem, head and plain sites left out of the grid.
  std::size_t excluded_sites = 0;
  std::string notice;

  const BlockCell* cell(std::size_t block, SiteSlot slot) const;
};

/// Groups in-block sites of runs that share one activation into a
/// blocks × {A-1, A-2} grid. Without block structure the grouping is
/// marked unavailable. Throws ContractError on a grid with empty cells.
BlockGrouping block_grouping(std::span<const RunSnapshots> runs);

struct BlockPattern {
  std::size_t block = 0;
  double a1_median = 0.0;
  double a2_median = 0.0;
  bool a1_greater = false;
};

struct PatternResult {
  std::string param;
  std::vector<BlockPattern> blocks;
  /// Blocks after the first where the A-1 median exceeds the A-2 median.
  std::size_t holds_after_first = 0;
  std::size_t blocks_after_first = 0;
  bool first_block_holds = false;
};

/// Compares cell medians of `param` between the two slots of every block.
PatternResult pattern_test(const BlockGrouping& grouping, const std::string& param = "beta");

struct CellStats {
  std::string param;
  std::size_t block = 0;
  SiteSlot slot = SiteSlot::kA1;
  BoxStats stats;
};

struct ActivationAnalysis {
  std::string activation;
  std::vector<RunSnapshots> runs;
  BlockGrouping grouping;
  std::vector<CellStats> box;
  std::optional<PatternResult> pattern;
  std::optional<ResponseEnvelope> envelope;
};

/// Evenly spaced grid for response envelopes.
std::vector<double> envelope_grid(double lo = -5.0, double hi = 5.0, std::size_t points = 201);

/// Runs grouping, box statistics, the β pattern test and the response
/// envelope for each activation present in `runs`.
std::vector<ActivationAnalysis> analyze(const std::vector<RunSnapshots>& runs);

/// Writes positions.csv always; blocks.csv, boxstats.csv, envelope.csv and
/// pattern.csv when any activation has block structure or when there is
/// nothing to analyse. Returns the files written.
std::vector<std::filesystem::path> export_report(const std::vector<ActivationAnalysis>& analyses,
                                                 const std::filesystem::path& dir);

/// Column names of each exported file.
const std::vector<std::string>& positions_header();
const std::vector<std::string>& blocks_header();
const std::vector<std::string>& boxstats_header();
const std::vector<std::string>& envelope_header();
const std::vector<std::string>& pattern_header();

/// Parses positions.csv back into per-run snapshots.
std::vector<RunSnapshots> read_positions_csv(const std::filesystem::path& path);

}  // namespace actbench
