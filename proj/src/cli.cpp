#include "actbench/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "actbench/activation_check.hpp"
#include "actbench/analysis.hpp"
#include "actbench/csv.hpp"
#include "actbench/data.hpp"
#include "actbench/errors.hpp"
#include "actbench/models.hpp"
#include "actbench/report.hpp"
#include "actbench/training.hpp"

namespace actbench {
namespace {

namespace fs = std::filesystem;

constexpr double kGradcheckTolerance = 1e-4;

/// Raised for bad flag values found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flags shared by train, lr-find and benchmark.
struct RunFlags {
  std::string arch = "lenet5";
  std::string dataset;
  std::string data_dir;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  bool lr_find = false;
  std::vector<std::uint64_t> seeds{1};
  bool mixup = false;
  double mixup_alpha = 0.2;
  bool augment = false;
  bool no_augment = false;
  std::string schedule = "constant";
  std::size_t widen = 1;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t eval_batch_size = 100;
  std::string out = ".";
  bool quiet = false;
};

void add_data_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--arch", f.arch, "lenet4, lenet5 or mini_resnet")->capture_default_str();
  cmd->add_option("--dataset", f.dataset, "mnist or cifar10 (default: follows --arch)");
  cmd->add_option("--data-dir", f.data_dir, "Dataset root (default: $ACTBENCH_DATA_DIR)");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--widen", f.widen, "Width factor of mini_resnet")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--train-limit", f.train_limit, "Use the first N training images (0: all)")->capture_default_str();
  cmd->add_option("--test-limit", f.test_limit, "Use the first N test images (0: all)")->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_flag("--quiet", f.quiet, "Suppress progress lines");
}

void add_train_flags(CLI::App* cmd, RunFlags& f) {
  add_data_flags(cmd, f);
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  auto* lr = cmd->add_option("--lr", f.lr, "Learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_flag("--lr-find", f.lr_find, "Pick the rate with the finder, per seed")->excludes(lr);
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
  cmd->add_flag("--mixup", f.mixup, "Mixup on training batches");
  cmd->add_option("--mixup-alpha", f.mixup_alpha, "Beta parameter of mixup")->capture_default_str();
  auto* aug = cmd->add_flag("--augment", f.augment, "Random flip and crop (default on for cifar10)");
  cmd->add_flag("--no-augment", f.no_augment, "Disable augmentation")->excludes(aug);
  cmd->add_option("--schedule", f.schedule, "constant or one_cycle")->capture_default_str();
  cmd->add_option("--eval-batch-size", f.eval_batch_size, "Evaluation batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

fs::path resolve_data_dir(const RunFlags& f) {
  if (!f.data_dir.empty()) return f.data_dir;
  if (const char* env = std::getenv("ACTBENCH_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw UsageError("no dataset root: pass --data-dir or set ACTBENCH_DATA_DIR");
}

template <typename Fn>
auto as_usage(Fn&& fn) {
  try {
    return fn();
  } catch (const RegistryError& e) {
    throw UsageError(e.what());
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

/// Config with everything but the activation filled in; validates flags.
TrainConfig base_config(const RunFlags& f) {
  TrainConfig c;
  c.model.arch = as_usage([&] { return parse_arch(f.arch); });
  c.model.widen_factor = f.widen;
  const DatasetName natural = c.model.arch == Arch::kMiniResNet ? DatasetName::kCifar10 : DatasetName::kMnist;
  c.dataset = f.dataset.empty() ? natural : as_usage([&] { return parse_dataset(f.dataset); });
  if (c.dataset != natural) {
    throw UsageError(std::string(arch_name(c.model.arch)) + " expects " + std::string(dataset_name(natural)) +
                     " inputs, not " + std::string(dataset_name(c.dataset)));
  }
  c.epochs = f.epochs;
  c.batch_size = f.batch_size;
  c.lr = f.lr;
  c.lr_find = f.lr_find;
  c.seeds = f.seeds;
  if (c.seeds.empty()) throw UsageError("--seeds needs at least one seed");
  if (c.dataset == DatasetName::kMnist && (f.mixup || f.augment)) {
    throw UsageError("--mixup and --augment apply to cifar10 only");
  }
  c.mixup = f.mixup;
  c.mixup_alpha = f.mixup_alpha;
  c.augment = f.augment || (c.dataset == DatasetName::kCifar10 && !f.no_augment);
  c.schedule = as_usage([&] { return parse_schedule(f.schedule); });
  c.train_limit = f.train_limit;
  c.test_limit = f.test_limit;
  c.eval_batch_size = f.eval_batch_size;
  as_usage([&] {
    c.validate();
    return 0;
  });
  return c;
}

std::string registry_listing() {
  std::string s = "registered activations:";
  for (const auto& n : registry_names(true)) s += "\n  " + n;
  return s;
}

ActivationSpec lookup_activation(const std::string& name) {
  try {
    return make_activation(name);
  } catch (const RegistryError&) {
    throw UsageError("unknown activation '" + name + "'\n" + registry_listing());
  }
}

struct Splits {
  Dataset train;
  Dataset test;
};

Splits load_splits(const TrainConfig& c, const fs::path& dir) {
  try {
    return {load_dataset(c.dataset, dir, Split::kTrain, c.train_limit),
            load_dataset(c.dataset, dir, Split::kTest, c.test_limit)};
  } catch (const MissingFileError& e) {
    throw UsageError(e.what());
  }
}

class Progress {
 public:
  Progress(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}
  void operator()(const std::string& line) {
    if (quiet_) return;
    std::lock_guard lock(mu_);
    err_ << line << std::endl;
  }
  ProgressFn fn() {
    return [this](const std::string& line) { (*this)(line); };
  }

 private:
  std::ostream& err_;
  bool quiet_;
  std::mutex mu_;
};

int cmd_train(const RunFlags& f, const std::string& activation, std::ostream& out, std::ostream& err) {
  TrainConfig c = base_config(f);
  c.model.activation = lookup_activation(activation);
  const fs::path dir = resolve_data_dir(f);
  const Splits data = load_splits(c, dir);
  Progress progress(err, f.quiet);

  const auto reports = train(c, data.train, data.test, progress.fn());
  const fs::path out_dir = f.out;
  for (const auto& r : reports) out << write_report(r, out_dir).string() << "\n";
  write_summary_csv(aggregate(reports), out_dir / "summary.csv");
  write_lr_range_csv(reports, out_dir / "lr_range.csv");
  out << (out_dir / "summary.csv").string() << "\n" << (out_dir / "lr_range.csv").string() << "\n";
  const bool any_completed =
      std::any_of(reports.begin(), reports.end(), [](const RunReport& r) { return !r.diverged; });
  if (!any_completed) {
    err << "error: every run diverged\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_lr_find(const RunFlags& f, const std::string& activation, const LRFindOptions& opts, std::ostream& out,
                std::ostream& err) {
  TrainConfig c = base_config(f);
  c.model.activation = lookup_activation(activation);
  if (!(opts.min_lr > 0.0) || !(opts.max_lr > opts.min_lr) || opts.num_iters < 2) {
    throw UsageError("lr-find needs 0 < --min-lr < --max-lr and --iters >= 2");
  }
  const fs::path dir = resolve_data_dir(f);
  const Splits data = load_splits(c, dir);
  const std::uint64_t seed = c.seeds.front();
  const Model model = build_model(c.model, seed);
  const LRFindResult r = lr_find(model, data.train, opts, c.batch_size, seed);

  const fs::path path = fs::path(f.out) / (std::string(arch_name(c.model.arch)) + "_" + c.model.activation.name() +
                                           "_seed" + std::to_string(seed) + "_lr_find.csv");
  CsvWriter csv(path, {"lr", "loss", "smoothed"});
  for (std::size_t i = 0; i < r.lrs.size(); ++i) {
    csv.row({format_number(r.lrs[i]), format_number(r.losses[i]), format_number(r.smoothed[i])});
  }
  csv.close();
  if (!f.quiet && r.stopped_early) err << "sweep stopped early after " << r.lrs.size() << " rates\n";
  out << "suggested_lr " << format_number(r.suggested_lr) << "\n";
  out << "min_loss_lr " << format_number(r.min_loss_lr) << "\n";
  out << path.string() << "\n";
  return kExitOk;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

int cmd_benchmark(const RunFlags& f, const std::string& activations, std::size_t jobs, std::ostream& out,
                  std::ostream& err) {
  const TrainConfig base = base_config(f);
  std::vector<std::string> names =
      activations == "all" ? registry_names(true) : split_list(activations);
  if (names.empty()) throw UsageError("--activations is empty");
  std::set<std::string> seen;
  std::vector<ActivationSpec> specs;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw UsageError("activation '" + n + "' listed twice");
    specs.push_back(lookup_activation(n));
  }
  if (jobs == 0) throw UsageError("--jobs must be at least 1");
  const fs::path dir = resolve_data_dir(f);
  const Splits data = load_splits(base, dir);
  const fs::path out_dir = f.out;
  Progress progress(err, f.quiet);

  std::vector<std::vector<RunReport>> results(specs.size());
  std::vector<std::string> errors(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      TrainConfig c = base;
      c.model.activation = specs[i];
      try {
        results[i] = train(c, data.train, data.test, progress.fn());
        for (const auto& r : results[i]) write_report(r, out_dir);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        progress(names[i] + ": failed: " + errors[i]);
      }
    }
  };
  const std::size_t threads = std::min(jobs, specs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<RunReport> all;
  std::vector<std::string> failed;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!errors[i].empty()) {
      failed.push_back(names[i]);
      err << "error: " << names[i] << ": " << errors[i] << "\n";
    }
    for (auto& r : results[i]) all.push_back(std::move(r));
  }
  write_benchmark_csv(all, failed, out_dir / "benchmark.csv");
  write_summary_csv(aggregate(all), out_dir / "summary.csv");
  write_lr_range_csv(all, out_dir / "lr_range.csv");
  out << (out_dir / "benchmark.csv").string() << "\n";
  const bool any_completed = std::any_of(all.begin(), all.end(), [](const RunReport& r) { return !r.diverged; });
  if (!any_completed) {
    err << "error: no run completed\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_analyze(const std::string& reports_dir, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(reports_dir)) throw UsageError("reports directory not found: " + reports_dir);
  std::vector<RunSnapshots> runs;
  for (const auto& path : list_reports(reports_dir)) {
    RunReport r = read_report(path);
    runs.push_back({r.activation, r.seed, std::move(r.snapshots)});
  }
  if (runs.empty()) err << "note: no reports in " << reports_dir << "\n";
  const auto analyses = analyze(runs);
  for (const auto& a : analyses) {
    if (!a.grouping.available) err << "note: " << a.activation << ": " << a.grouping.notice << "\n";
    if (a.pattern) {
      out << a.activation << ": A-1 " << a.pattern->param << " median above A-2 in " << a.pattern->holds_after_first
          << "/" << a.pattern->blocks_after_first << " blocks after the first\n";
    }
  }
  for (const auto& p : export_report(analyses, out_dir)) out << p.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& which, std::size_t trials, std::uint64_t seed, double fault, std::ostream& out,
                  std::ostream& err) {
  std::vector<std::string> names = which == "all" ? registry_names(true) : split_list(which);
  if (names.empty()) throw UsageError("--activation is empty");
  std::vector<ActivationSpec> specs;
  for (const auto& n : names) specs.push_back(lookup_activation(n));
  if (trials == 0) throw UsageError("--trials must be at least 1");

  std::size_t width = 12;
  for (const auto& n : names) width = std::max(width, n.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "activation" << std::setw(8) << "points" << std::setw(14) << "max_rel_err"
      << "status\n";
  std::string worst_name;
  std::string worst_what;
  double worst = -1.0;
  bool all_pass = true;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ActivationCheckOptions opts;
    opts.trials = trials;
    opts.seed = seed + i;
    opts.fault = fault;
    const ActivationCheckResult r = check_activation_gradients(specs[i], opts);
    const bool pass = r.passed(kGradcheckTolerance);
    all_pass = all_pass && pass;
    std::ostringstream e;
    e << std::scientific << std::setprecision(3) << r.worst();
    out << std::setw(static_cast<int>(width)) << names[i] << std::setw(8) << r.points << std::setw(14) << e.str()
        << (pass ? "PASS" : "FAIL") << "\n";
    if (!(r.worst() <= worst)) {
      worst = r.worst();
      worst_name = names[i];
      worst_what = "input";
      double w = r.max_error_x;
      for (const auto& [pname, v] : r.max_error_params) {
        if (!(v <= w)) {
          w = v;
          worst_what = pname;
        }
      }
    }
  }
  if (!all_pass) {
    err << "error: gradient check failed; worst offender " << worst_name << " (" << worst_what
        << " gradient) with relative error " << format_number(worst) << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learnable activation benchmark"};
  app.name("actbench");
  app.require_subcommand(1);

  RunFlags train_flags;
  std::string train_activation;
  auto* train_cmd = app.add_subcommand("train", "Train one activation over several seeds");
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_option("--activation", train_activation, "Activation name")->required();

  RunFlags find_flags;
  std::string find_activation;
  LRFindOptions find_opts;
  std::uint64_t find_seed = 1;
  auto* find_cmd = app.add_subcommand("lr-find", "Learning-rate range test");
  add_data_flags(find_cmd, find_flags);
  find_cmd->add_option("--activation", find_activation, "Activation name")->required();
  find_cmd->add_option("--seed", find_seed, "Model and data seed")->capture_default_str();
  find_cmd->add_option("--min-lr", find_opts.min_lr, "First rate")->capture_default_str();
  find_cmd->add_option("--max-lr", find_opts.max_lr, "Last rate")->capture_default_str();
  find_cmd->add_option("--iters", find_opts.num_iters, "Rates in the sweep")->capture_default_str();

  RunFlags bench_flags;
  std::string bench_activations = "all";
  std::size_t jobs = 1;
  auto* bench_cmd = app.add_subcommand("benchmark", "Train a list of activations and rank them");
  add_train_flags(bench_cmd, bench_flags);
  bench_cmd->add_option("--activations", bench_activations, "'all' or a comma-separated list")
      ->capture_default_str();
  bench_cmd->add_option("--jobs", jobs, "Activations trained in parallel")->capture_default_str();

  std::string reports_dir;
  std::string analyze_out = ".";
  auto* analyze_cmd = app.add_subcommand("analyze", "Parameter statistics from run reports");
  analyze_cmd->add_option("--reports", reports_dir, "Directory of run reports")->required();
  analyze_cmd->add_option("--out", analyze_out, "Output directory")->capture_default_str();

  std::string check_activation = "all";
  std::size_t check_trials = 100;
  std::uint64_t check_seed = 0;
  double fault = 0.0;
  auto* check_cmd = app.add_subcommand("gradcheck", "Finite-difference check of activation gradients");
  check_cmd->add_option("--activation", check_activation, "'all' or a comma-separated list")->capture_default_str();
  check_cmd->add_option("--trials", check_trials, "Random parameter draws per activation")->capture_default_str();
  check_cmd->add_option("--seed", check_seed, "Sampling seed")->capture_default_str();
  check_cmd->add_option("--inject-fault", fault)->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const bool help = dynamic_cast<const CLI::CallForHelp*>(&e) != nullptr ||
                      dynamic_cast<const CLI::CallForAllHelp*>(&e) != nullptr;
    app.exit(e, out, err);
    return help ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, train_activation, out, err);
    if (*find_cmd) {
      find_flags.seeds = {find_seed};
      return cmd_lr_find(find_flags, find_activation, find_opts, out, err);
    }
    if (*bench_cmd) return cmd_benchmark(bench_flags, bench_activations, jobs, out, err);
    if (*analyze_cmd) return cmd_analyze(reports_dir, analyze_out, out, err);
    if (*check_cmd) return cmd_gradcheck(check_activation, check_trials, check_seed, fault, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace actbench
