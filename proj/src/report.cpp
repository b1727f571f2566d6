#include "actbench/report.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "actbench/csv.hpp"
#include "actbench/errors.hpp"
#include "json.hpp"

namespace actbench {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kSchemaVersion = 1;
constexpr std::string_view kTimingSuffix = ".timing.json";

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json config_json(const TrainConfig& c) {
  const auto& a = c.model.activation;
  return json{
      {"arch", arch_name(c.model.arch)},
      {"activation", a.name()},
      {"per_channel", a.per_channel},
      {"init_alpha", a.init_alpha},
      {"init_beta", a.init_beta},
      {"init_mean_shift", a.init_mean_shift},
      {"widen_factor", c.model.widen_factor},
      {"num_classes", c.model.num_classes},
      {"dataset", dataset_name(c.dataset)},
      {"train_limit", c.train_limit},
      {"test_limit", c.test_limit},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"lr_find", c.lr_find},
      {"lr_find_min", c.lr_find_options.min_lr},
      {"lr_find_max", c.lr_find_options.max_lr},
      {"lr_find_iters", c.lr_find_options.num_iters},
      {"seeds", c.seeds},
      {"mixup", c.mixup},
      {"mixup_alpha", c.mixup_alpha},
      {"augment", c.augment},
      {"schedule", schedule_name(c.schedule)},
      {"eval_batch_size", c.eval_batch_size},
  };
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.model.arch = parse_arch(j.at("arch").get<std::string>());
  c.model.activation = make_activation(j.at("activation").get<std::string>());
  c.model.activation.per_channel = j.at("per_channel").get<bool>();
  c.model.activation.init_alpha = j.at("init_alpha").get<double>();
  c.model.activation.init_beta = j.at("init_beta").get<double>();
  c.model.activation.init_mean_shift = j.at("init_mean_shift").get<double>();
  c.model.widen_factor = j.at("widen_factor").get<std::size_t>();
  c.model.num_classes = j.at("num_classes").get<std::size_t>();
  c.dataset = parse_dataset(j.at("dataset").get<std::string>());
  c.train_limit = j.at("train_limit").get<std::size_t>();
  c.test_limit = j.at("test_limit").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.lr_find = j.at("lr_find").get<bool>();
  c.lr_find_options.min_lr = j.at("lr_find_min").get<double>();
  c.lr_find_options.max_lr = j.at("lr_find_max").get<double>();
  c.lr_find_options.num_iters = j.at("lr_find_iters").get<std::size_t>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.mixup = j.at("mixup").get<bool>();
  c.mixup_alpha = j.at("mixup_alpha").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.schedule = parse_schedule(j.at("schedule").get<std::string>());
  c.eval_batch_size = j.at("eval_batch_size").get<std::size_t>();
  return c;
}

json snapshot_json(const ParamSnapshot& s) {
  return json{
      {"position_index", s.position_index},
      {"block_index", s.block_index ? json(*s.block_index) : json(nullptr)},
      {"slot", slot_name(s.slot)},
      {"alpha", optional_number(s.alpha)},
      {"beta", optional_number(s.beta)},
      {"mean_shift", optional_number(s.mean_shift)},
      {"names", s.names},
      {"values", s.values},
  };
}

std::optional<double> read_optional(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

ParamSnapshot snapshot_from_json(const json& j, const std::string& activation) {
  ParamSnapshot s;
  s.activation = activation;
  s.position_index = j.at("position_index").get<std::size_t>();
  if (!j.at("block_index").is_null()) s.block_index = j.at("block_index").get<std::size_t>();
  s.slot = parse_slot(j.at("slot").get<std::string>());
  s.alpha = read_optional(j, "alpha");
  s.beta = read_optional(j, "beta");
  s.mean_shift = read_optional(j, "mean_shift");
  s.names = j.at("names").get<std::vector<std::string>>();
  s.values = j.at("values").get<std::vector<double>>();
  return s;
}

json lr_find_json(const LRFindResult& r) {
  return json{
      {"suggested_lr", r.suggested_lr}, {"min_loss_lr", r.min_loss_lr}, {"min_lr_bound", r.min_lr_bound},
      {"max_lr_bound", r.max_lr_bound}, {"stopped_early", r.stopped_early}, {"lrs", r.lrs},
      {"losses", r.losses},             {"smoothed", r.smoothed},
  };
}

LRFindResult lr_find_from_json(const json& j) {
  LRFindResult r;
  r.suggested_lr = j.at("suggested_lr").get<double>();
  r.min_loss_lr = j.at("min_loss_lr").get<double>();
  r.min_lr_bound = j.at("min_lr_bound").get<double>();
  r.max_lr_bound = j.at("max_lr_bound").get<double>();
  r.stopped_early = j.at("stopped_early").get<bool>();
  r.lrs = j.at("lrs").get<std::vector<double>>();
  r.losses = j.at("losses").get<std::vector<double>>();
  r.smoothed = j.at("smoothed").get<std::vector<double>>();
  return r;
}

bool is_timing_file(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.size() >= kTimingSuffix.size() &&
         name.compare(name.size() - kTimingSuffix.size(), kTimingSuffix.size(), kTimingSuffix) == 0;
}

fs::path timing_path(const fs::path& report_path) {
  fs::path p = report_path;
  p.replace_extension();
  return p.string() + std::string(kTimingSuffix);
}

}  // namespace

std::string report_json(const RunReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back(json{{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"accuracy", e.accuracy},
                          {"top5_accuracy", e.top5_accuracy}});
  }
  json snaps = json::array();
  for (const auto& s : r.snapshots) snaps.push_back(snapshot_json(s));
  const json doc{
      {"schema_version", kSchemaVersion},
      {"activation", r.activation},
      {"seed", r.seed},
      {"config", config_json(r.config)},
      {"lr_used", r.lr_used},
      {"lr_find", r.lr_find ? lr_find_json(*r.lr_find) : json(nullptr)},
      {"initial_loss", r.initial_loss},
      {"status", r.diverged ? "diverged" : "completed"},
      {"skipped_steps", r.skipped_steps},
      {"epochs", epochs},
      {"snapshots", snaps},
      {"final_state_hash", hex(r.final_state_hash)},
  };
  return doc.dump(2) + "\n";
}

std::string timing_json(const RunReport& r) {
  std::vector<double> secs;
  for (const auto& e : r.epochs) secs.push_back(e.epoch_seconds);
  return json{{"activation", r.activation}, {"seed", r.seed}, {"epoch_seconds", secs}}.dump(2) + "\n";
}

RunReport parse_report(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw FormatError(source + ": unsupported schema_version");
    }
    RunReport r;
    r.activation = j.at("activation").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = config_from_json(j.at("config"));
    r.lr_used = j.at("lr_used").get<double>();
    if (!j.at("lr_find").is_null()) r.lr_find = lr_find_from_json(j.at("lr_find"));
    r.initial_loss = read_optional(j, "initial_loss").value_or(std::numeric_limits<double>::quiet_NaN());
    const auto status = j.at("status").get<std::string>();
    if (status != "completed" && status != "diverged") throw FormatError(source + ": unknown status " + status);
    r.diverged = status == "diverged";
    r.skipped_steps = j.at("skipped_steps").get<std::size_t>();
    for (const auto& e : j.at("epochs")) {
      EpochMetrics m;
      m.epoch = e.at("epoch").get<std::size_t>();
      m.train_loss = e.at("train_loss").get<double>();
      m.val_loss = e.at("val_loss").get<double>();
      m.accuracy = e.at("accuracy").get<double>();
      m.top5_accuracy = e.at("top5_accuracy").get<double>();
      r.epochs.push_back(m);
    }
    for (const auto& s : j.at("snapshots")) r.snapshots.push_back(snapshot_from_json(s, r.activation));
    r.final_state_hash = std::stoull(j.at("final_state_hash").get<std::string>(), nullptr, 16);
    return r;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(source + ": malformed report: " + e.what());
  }
}

std::string report_stem(const RunReport& r) {
  return std::string(arch_name(r.config.model.arch)) + "_" + r.activation + "_seed" + std::to_string(r.seed);
}

fs::path write_report(const RunReport& r, const fs::path& dir) {
  const fs::path path = dir / (report_stem(r) + ".json");
  write_text(path, report_json(r));
  write_text(timing_path(path), timing_json(r));
  return path;
}

RunReport read_report(const fs::path& path) {
  RunReport r = parse_report(read_text(path), path.string());
  const fs::path tp = timing_path(path);
  if (fs::exists(tp)) {
    try {
      const auto secs = json::parse(read_text(tp)).at("epoch_seconds").get<std::vector<double>>();
      for (std::size_t i = 0; i < std::min(secs.size(), r.epochs.size()); ++i) r.epochs[i].epoch_seconds = secs[i];
    } catch (const std::exception& e) {
      throw FormatError(tp.string() + ": malformed timing file: " + e.what());
    }
  }
  return r;
}

std::vector<fs::path> list_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingFileError("report directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".json" && !is_timing_file(p)) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& path) {
  CsvWriter w(path, {"activation", "metric", "mean", "max", "rank"});
  for (const auto& r : rows) {
    w.row({r.activation, r.metric, format_number(r.mean), format_number(r.max), std::to_string(r.rank)});
  }
  w.close();
}

void write_lr_range_csv(const std::vector<RunReport>& reports, const fs::path& path) {
  CsvWriter w(path, {"activation", "lr_min", "lr_max", "runs"});
  for (const auto& range : lr_ranges(reports)) {
    const auto runs = std::count_if(reports.begin(), reports.end(),
                                    [&](const RunReport& r) { return r.activation == range.activation; });
    w.row({range.activation, format_number(range.min), format_number(range.max), std::to_string(runs)});
  }
  w.close();
}

void write_benchmark_csv(const std::vector<RunReport>& reports, const std::vector<std::string>& failed,
                         const fs::path& path) {
  std::vector<std::string> header{"activation", "runs", "diverged", "failed"};
  for (const auto& m : summary_metrics()) {
    header.push_back(m + "_mean");
    header.push_back(m + "_max");
    header.push_back(m + "_rank");
  }
  header.push_back("lr_min");
  header.push_back("lr_max");

  const auto rows = aggregate(reports);
  const auto ranges = lr_ranges(reports);
  std::vector<std::string> names;
  for (const auto& r : ranges) names.push_back(r.activation);
  for (const auto& f : failed) {
    if (std::find(names.begin(), names.end(), f) == names.end()) names.push_back(f);
  }

  CsvWriter w(path, header);
  for (const auto& name : names) {
    const auto runs = std::count_if(reports.begin(), reports.end(), [&](const RunReport& r) { return r.activation == name; });
    const auto diverged = std::count_if(reports.begin(), reports.end(),
                                        [&](const RunReport& r) { return r.activation == name && r.diverged; });
    const auto fails = std::count(failed.begin(), failed.end(), name);
    std::vector<std::string> fields{name, std::to_string(runs), std::to_string(diverged), std::to_string(fails)};
    for (const auto& m : summary_metrics()) {
      const auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const SummaryRow& r) { return r.activation == name && r.metric == m; });
      if (it == rows.end()) {
        fields.insert(fields.end(), {"", "", ""});
      } else {
        fields.insert(fields.end(), {format_number(it->mean), format_number(it->max), std::to_string(it->rank)});
      }
    }
    const auto rit = std::find_if(ranges.begin(), ranges.end(), [&](const LRRange& r) { return r.activation == name; });
    if (rit == ranges.end()) {
      fields.insert(fields.end(), {"", ""});
    } else {
      fields.insert(fields.end(), {format_number(rit->min), format_number(rit->max)});
    }
    w.row(fields);
  }
  w.close();
}

}  // namespace actbench
