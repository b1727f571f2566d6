#include "actbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "actbench/csv.hpp"
#include "actbench/errors.hpp"

namespace actbench {
namespace fs = std::filesystem;

namespace {

constexpr double kWhisker = 1.5;

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ";" : "") + parts[i];
  return out;
}

std::string join_numbers(std::span<const double> xs) {
  std::vector<std::string> parts;
  for (double x : xs) parts.push_back(format_number(x));
  return join(parts);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t sep = s.find(';', start);
    out.push_back(s.substr(start, sep - start));
    if (sep == std::string::npos) break;
    start = sep + 1;
  }
  return out;
}

double parse_number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad number '" + s + "'");
  }
}

std::optional<double> parse_optional(const std::string& s, const fs::path& path) {
  if (s.empty()) return std::nullopt;
  return parse_number(s, path);
}

bool in_block(const ParamSnapshot& s) {
  return s.block_index && (s.slot == SiteSlot::kA1 || s.slot == SiteSlot::kA2);
}

}  // namespace

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ContractError("quantile of an empty list");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw ContractError("box_stats needs at least one value");
  std::vector<double> xs(values.begin(), values.end());
  for (double x : xs) {
    if (!std::isfinite(x)) throw ContractError("box_stats got a non-finite value");
  }
  std::sort(xs.begin(), xs.end());
  BoxStats b;
  b.n = xs.size();
  b.q1 = sorted_quantile(xs, 0.25);
  b.median = sorted_quantile(xs, 0.5);
  b.q3 = sorted_quantile(xs, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - kWhisker * iqr;
  const double hi_fence = b.q3 + kWhisker * iqr;
  b.min = b.q1;
  b.max = b.q3;
  for (double x : xs) {
    if (x < lo_fence || x > hi_fence) {
      b.outliers.push_back(x);
      continue;
    }
    b.min = std::min(b.min, x);
    b.max = std::max(b.max, x);
  }
  return b;
}

const std::vector<double>* BlockCell::find(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return &values[j];
  }
  return nullptr;
}

const BlockCell* BlockGrouping::cell(std::size_t block, SiteSlot slot) const {
  for (const auto& c : cells) {
    if (c.block == block && c.slot == slot) return &c;
  }
  return nullptr;
}

BlockGrouping block_grouping(std::span<const RunSnapshots> runs) {
  BlockGrouping g;
  std::size_t max_block = 0;
  bool any = false;
  for (const auto& run : runs) {
    for (const auto& s : run.sites) {
      if (!in_block(s)) {
        ++g.excluded_sites;
        continue;
      }
      any = true;
      max_block = std::max(max_block, *s.block_index);
    }
  }
  if (!any) {
    g.notice = "block grouping unavailable: sites carry no block structure; listing per position instead";
    return g;
  }
  g.available = true;
  g.num_blocks = max_block + 1;
  for (std::size_t b = 0; b < g.num_blocks; ++b) {
    for (SiteSlot slot : {SiteSlot::kA1, SiteSlot::kA2}) g.cells.push_back(BlockCell{.block = b, .slot = slot});
  }
  for (const auto& run : runs) {
    for (const auto& s : run.sites) {
      if (!in_block(s)) continue;
      BlockCell& c = g.cells[*s.block_index * 2 + (s.slot == SiteSlot::kA2 ? 1 : 0)];
      if (c.names.empty()) {
        c.names = s.names;
        c.values.resize(s.names.size());
      } else if (c.names != s.names) {
        throw ContractError("block " + std::to_string(c.block) + " mixes parameter sets");
      }
      const std::size_t k = s.names.size();
      for (std::size_t i = 0; k && i < s.values.size(); ++i) c.values[i % k].push_back(s.values[i]);
      ++c.sites;
      ++g.grouped_sites;
    }
  }
  for (const auto& c : g.cells) {
    if (c.sites == 0) {
      throw ContractError("block grid has no site for block " + std::to_string(c.block) + " slot " +
                          std::string(slot_name(c.slot)));
    }
  }
  return g;
}

PatternResult pattern_test(const BlockGrouping& grouping, const std::string& param) {
  PatternResult r;
  r.param = param;
  if (!grouping.available) return r;
  for (std::size_t b = 0; b < grouping.num_blocks; ++b) {
    const auto* a1 = grouping.cell(b, SiteSlot::kA1)->find(param);
    const auto* a2 = grouping.cell(b, SiteSlot::kA2)->find(param);
    if (!a1 || !a2 || a1->empty() || a2->empty()) {
      throw ContractError("parameter '" + param + "' is not present in block " + std::to_string(b));
    }
    BlockPattern p{b, box_stats(*a1).median, box_stats(*a2).median, false};
    p.a1_greater = p.a1_median > p.a2_median;
    if (b == 0) {
      r.first_block_holds = p.a1_greater;
    } else {
      ++r.blocks_after_first;
      r.holds_after_first += p.a1_greater;
    }
    r.blocks.push_back(p);
  }
  return r;
}

std::vector<double> envelope_grid(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) throw ContractError("envelope grid needs hi > lo and at least two points");
  std::vector<double> x(points);
  for (std::size_t i = 0; i < points; ++i) {
    x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return x;
}

std::vector<ActivationAnalysis> analyze(const std::vector<RunSnapshots>& runs) {
  std::vector<ActivationAnalysis> out;
  for (const auto& run : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& a) { return a.activation == run.activation; });
    if (it == out.end()) {
      out.push_back(ActivationAnalysis{.activation = run.activation});
      it = out.end() - 1;
    }
    it->runs.push_back(run);
  }
  for (auto& a : out) {
    std::sort(a.runs.begin(), a.runs.end(), [](const auto& x, const auto& y) { return x.seed < y.seed; });
    a.grouping = block_grouping(a.runs);
    if (!a.grouping.available) continue;
    for (const auto& c : a.grouping.cells) {
      for (std::size_t j = 0; j < c.names.size(); ++j) {
        a.box.push_back(CellStats{c.names[j], c.block, c.slot, box_stats(c.values[j])});
      }
    }
    std::sort(a.box.begin(), a.box.end(), [](const CellStats& x, const CellStats& y) {
      return std::tie(x.param, x.block, x.slot) < std::tie(y.param, y.block, y.slot);
    });
    const auto& first = a.grouping.cells.front();
    if (first.find("beta")) a.pattern = pattern_test(a.grouping, "beta");
    std::vector<ActivationSite> sites;
    const ActivationSpec spec = make_activation(a.activation);
    for (const auto& run : a.runs) {
      for (const auto& s : run.sites) {
        sites.push_back(ActivationSite{spec, s.position_index, s.block_index, s.slot, s.values});
      }
    }
    if (!sites.empty()) a.envelope = response_envelope(sites, envelope_grid());
  }
  return out;
}

const std::vector<std::string>& positions_header() {
  static const std::vector<std::string> h{"activation", "seed", "position_index", "block_index", "slot",
                                          "alpha",      "beta", "mean_shift",     "names",       "values"};
  return h;
}

const std::vector<std::string>& blocks_header() {
  static const std::vector<std::string> h{"activation", "param", "block_index", "slot", "seed", "channel", "value"};
  return h;
}

const std::vector<std::string>& boxstats_header() {
  static const std::vector<std::string> h{"activation", "param", "block_index", "slot",  "n",       "min",
                                          "q1",         "median", "q3",         "max",   "outliers"};
  return h;
}

const std::vector<std::string>& envelope_header() {
  static const std::vector<std::string> h{"activation", "x", "lower", "upper"};
  return h;
}

const std::vector<std::string>& pattern_header() {
  static const std::vector<std::string> h{"activation", "param", "block_index", "a1_median", "a2_median", "a1_greater"};
  return h;
}

std::vector<fs::path> export_report(const std::vector<ActivationAnalysis>& analyses, const fs::path& dir) {
  std::vector<fs::path> written;
  {
    const fs::path p = dir / "positions.csv";
    CsvWriter w(p, positions_header());
    for (const auto& a : analyses) {
      for (const auto& run : a.runs) {
        for (const auto& s : run.sites) {
          w.row({a.activation, std::to_string(run.seed), std::to_string(s.position_index),
                 s.block_index ? std::to_string(*s.block_index) : "", std::string(slot_name(s.slot)),
                 format_optional(s.alpha), format_optional(s.beta), format_optional(s.mean_shift), join(s.names),
                 join_numbers(s.values)});
        }
      }
    }
    w.close();
    written.push_back(p);
  }

  const bool any_blocks = std::any_of(analyses.begin(), analyses.end(),
                                      [](const ActivationAnalysis& a) { return a.grouping.available; });
  if (!any_blocks && !analyses.empty()) return written;

  {
    const fs::path p = dir / "blocks.csv";
    CsvWriter w(p, blocks_header());
    for (const auto& a : analyses) {
      if (!a.grouping.available) continue;
      for (const auto& run : a.runs) {
        for (const auto& s : run.sites) {
          if (!in_block(s) || s.names.empty()) continue;
          const std::size_t k = s.names.size();
          for (std::size_t i = 0; i < s.values.size(); ++i) {
            w.row({a.activation, s.names[i % k], std::to_string(*s.block_index), std::string(slot_name(s.slot)),
                   std::to_string(run.seed), std::to_string(i / k), format_number(s.values[i])});
          }
        }
      }
    }
    w.close();
    written.push_back(p);
  }
  {
    const fs::path p = dir / "boxstats.csv";
    CsvWriter w(p, boxstats_header());
    for (const auto& a : analyses) {
      for (const auto& c : a.box) {
        const BoxStats& b = c.stats;
        w.row({a.activation, c.param, std::to_string(c.block), std::string(slot_name(c.slot)), std::to_string(b.n),
               format_number(b.min), format_number(b.q1), format_number(b.median), format_number(b.q3),
               format_number(b.max), join_numbers(b.outliers)});
      }
    }
    w.close();
    written.push_back(p);
  }
  {
    const fs::path p = dir / "envelope.csv";
    CsvWriter w(p, envelope_header());
    for (const auto& a : analyses) {
      if (!a.envelope) continue;
      const auto& e = *a.envelope;
      for (std::size_t i = 0; i < e.x.size(); ++i) {
        w.row({a.activation, format_number(e.x[i]), format_number(e.lower[i]), format_number(e.upper[i])});
      }
    }
    w.close();
    written.push_back(p);
  }
  {
    const fs::path p = dir / "pattern.csv";
    CsvWriter w(p, pattern_header());
    for (const auto& a : analyses) {
      if (!a.pattern) continue;
      for (const auto& b : a.pattern->blocks) {
        w.row({a.activation, a.pattern->param, std::to_string(b.block), format_number(b.a1_median),
               format_number(b.a2_median), b.a1_greater ? "true" : "false"});
      }
    }
    w.close();
    written.push_back(p);
  }
  return written;
}

std::vector<RunSnapshots> read_positions_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows.front() != positions_header()) {
    throw FormatError(path.string() + ": header does not match positions schema");
  }
  std::vector<RunSnapshots> runs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != positions_header().size()) {
      throw FormatError(path.string() + ": line " + std::to_string(r + 1) + " has " + std::to_string(f.size()) +
                        " fields");
    }
    const std::uint64_t seed = std::stoull(f[1]);
    if (runs.empty() || runs.back().activation != f[0] || runs.back().seed != seed) {
      runs.push_back(RunSnapshots{f[0], seed, {}});
    }
    ParamSnapshot s;
    s.activation = f[0];
    s.position_index = std::stoul(f[2]);
    if (!f[3].empty()) s.block_index = std::stoul(f[3]);
    s.slot = parse_slot(f[4]);
    s.alpha = parse_optional(f[5], path);
    s.beta = parse_optional(f[6], path);
    s.mean_shift = parse_optional(f[7], path);
    s.names = split(f[8]);
    for (const auto& v : split(f[9])) s.values.push_back(parse_number(v, path));
    runs.back().sites.push_back(std::move(s));
  }
  return runs;
}

}  // namespace actbench
