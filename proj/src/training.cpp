#include "actbench/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "actbench/errors.hpp"
#include "actbench/optim.hpp"

namespace actbench {
namespace {

constexpr double kOneCyclePct = 0.3;
constexpr double kOneCycleDiv = 25.0;
constexpr double kOneCycleFinalDiv = 1e4;
constexpr double kFlipProb = 0.5;
constexpr std::size_t kPad = 4;

double annealing_cos(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

struct StepOutcome {
  double loss;
  bool applied;
};

/// One forward/backward/update. Returns the pre-update loss; a non-finite
/// loss means no update was attempted.
StepOutcome train_step(Model& model, Adam& adam, const Batch& batch) {
  model.zero_grad();
  Tape tape;
  const NodeId logits = model.forward(tape, batch.images, true);
  NodeId loss = softmax_cross_entropy(tape, logits, batch.labels);
  if (batch.labels_b) {
    const NodeId other = softmax_cross_entropy(tape, logits, *batch.labels_b);
    loss = add(tape, scale(tape, loss, batch.lambda), scale(tape, other, 1.0 - batch.lambda));
  }
  const double value = tape.value(loss).item();
  if (!std::isfinite(value)) return {value, false};
  tape.backward(loss);
  const bool applied = adam.step(model.parameters());
  if (applied) model.project_activation_params();
  return {value, applied};
}

std::mt19937_64 data_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

void check_geometry(const ModelConfig& model, const Dataset& data) {
  if (data.image_shape() != required_input_shape(model.arch)) {
    throw ContractError(std::string(arch_name(model.arch)) + " cannot train on " +
                        std::string(dataset_name(data.name())) + " images");
  }
}

std::string format_epoch(const std::string& activation, std::uint64_t seed, const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(4);
  os << activation << " seed " << seed << " epoch " << m.epoch << ": train_loss " << m.train_loss << " val_loss "
     << m.val_loss << " acc " << m.accuracy << " top5 " << m.top5_accuracy << " (" << m.epoch_seconds << "s)";
  return os.str();
}

}  // namespace

std::string_view schedule_name(Schedule s) { return s == Schedule::kConstant ? "constant" : "one_cycle"; }

Schedule parse_schedule(std::string_view name) {
  if (name == "constant") return Schedule::kConstant;
  if (name == "one_cycle") return Schedule::kOneCycle;
  throw RegistryError("unknown schedule '" + std::string(name) + "'; available: constant one_cycle");
}

LRFindResult lr_sweep(const LRStepFn& step, const LRFindOptions& options) {
  if (!(options.min_lr > 0.0 && options.min_lr < options.max_lr)) {
    throw ContractError("lr sweep needs 0 < min_lr < max_lr");
  }
  if (options.num_iters < 10) throw ContractError("lr sweep needs at least 10 iterations");
  if (!(options.smoothing >= 0.0 && options.smoothing < 1.0)) throw ContractError("smoothing must lie in [0, 1)");

  LRFindResult r;
  r.min_lr_bound = options.min_lr;
  r.max_lr_bound = options.max_lr;
  const double log_min = std::log(options.min_lr);
  const double log_span = std::log(options.max_lr) - log_min;
  double avg = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.num_iters; ++i) {
    double lr = std::exp(log_min + log_span * static_cast<double>(i) / static_cast<double>(options.num_iters - 1));
    if (i == 0) lr = options.min_lr;
    if (i + 1 == options.num_iters) lr = options.max_lr;
    const double loss = step(lr);
    if (!std::isfinite(loss)) {
      if (i == 0) {
        throw SweepError("loss is not finite at the first sweep step (lr " + std::to_string(lr) +
                         "); try a smaller min_lr");
      }
      r.stopped_early = true;
      break;
    }
    avg = options.smoothing * avg + (1.0 - options.smoothing) * loss;
    const double smoothed = avg / (1.0 - std::pow(options.smoothing, static_cast<double>(i + 1)));
    if (i > 0 && smoothed > options.divergence_factor * best) {
      r.stopped_early = true;
      break;
    }
    best = std::min(best, smoothed);
    r.lrs.push_back(lr);
    r.losses.push_back(loss);
    r.smoothed.push_back(smoothed);
  }

  const std::size_t n = r.lrs.size();
  std::size_t first = 0;
  std::size_t last = n;
  if (n >= options.skip_start + options.skip_end + 2) {
    first = options.skip_start;
    last = n - options.skip_end;
  }
  std::size_t steepest = first;
  if (last - first > 1) {
    double best_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = first; i < last; ++i) {
      const std::size_t lo = i == first ? first : i - 1;
      const std::size_t hi = i + 1 == last ? i : i + 1;
      const double slope = (r.smoothed[hi] - r.smoothed[lo]) / (std::log(r.lrs[hi]) - std::log(r.lrs[lo]));
      if (slope < best_slope) {
        best_slope = slope;
        steepest = i;
      }
    }
  }
  r.suggested_lr = r.lrs[steepest];
  const auto min_it = std::min_element(r.smoothed.begin(), r.smoothed.end());
  r.min_loss_lr = std::max(options.min_lr, r.lrs[static_cast<std::size_t>(min_it - r.smoothed.begin())] / 10.0);
  return r;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be at least 1");
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (eval_batch_size < 1) throw ContractError("eval_batch_size must be at least 1");
  if (!(lr > 0.0) && !lr_find) throw ContractError("lr must be positive");
  if (seeds.empty()) throw ContractError("at least one seed is required");
  if (mixup && !(mixup_alpha > 0.0)) throw ContractError("mixup alpha must be positive");
  if (model.widen_factor < 1) throw ContractError("widen_factor must be at least 1");
}

EvalResult evaluate_logits(const Tensor& logits, const Labels& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("logits " + shape_to_string(logits.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  Tape tape(false);
  EvalResult r;
  r.loss = tape.value(softmax_cross_entropy(tape, tape.constant(logits), labels)).item();
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::size_t top1 = 0;
  std::size_t top5 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    const auto label = static_cast<std::size_t>(labels[i]);
    const double target = row[label];
    std::size_t rank = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] > target || (row[j] == target && j < label)) ++rank;
    }
    top1 += rank == 0;
    top5 += rank < 5;
  }
  r.accuracy = static_cast<double>(top1) / static_cast<double>(n);
  r.top5_accuracy = static_cast<double>(top5) / static_cast<double>(n);
  return r;
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("cannot evaluate on an empty dataset");
  check_geometry(model.config(), data);
  EvalResult total;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(data, idx);
    Tape tape(false);
    const Tensor logits = tape.value(model.forward(tape, b.images, false));
    const EvalResult part = evaluate_logits(logits, b.labels);
    const double w = static_cast<double>(idx.size());
    total.loss += part.loss * w;
    total.accuracy += part.accuracy * w;
    total.top5_accuracy += part.top5_accuracy * w;
  }
  const double n = static_cast<double>(data.size());
  total.loss /= n;
  total.accuracy /= n;
  total.top5_accuracy /= n;
  return total;
}

LRFindResult lr_find(const Model& model, const Dataset& data, const LRFindOptions& options, std::size_t batch_size,
                     std::uint64_t seed) {
  check_geometry(model.config(), data);
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  Model copy = model;
  Adam adam(copy.parameters(), AdamConfig{.lr = options.min_lr});
  auto rng = data_rng(seed, 2);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  const std::size_t bs = std::min(batch_size, data.size());
  auto step = [&](double lr) {
    if (cursor + bs > order.size()) {
      order = shuffled_indices(data.size(), rng);
      cursor = 0;
    }
    const Batch b = make_batch(data, std::span<const std::size_t>(order).subspan(cursor, bs));
    cursor += bs;
    adam.set_lr(lr);
    return train_step(copy, adam, b).loss;
  };
  return lr_sweep(step, options);
}

double scheduled_lr(Schedule schedule, double base_lr, std::size_t step, std::size_t total_steps) {
  if (schedule == Schedule::kConstant || total_steps < 2) return base_lr;
  const double warm = std::max(1.0, std::floor(kOneCyclePct * static_cast<double>(total_steps)));
  const double s = static_cast<double>(step);
  const double start = base_lr / kOneCycleDiv;
  if (s < warm) return annealing_cos(start, base_lr, s / warm);
  const double rest = static_cast<double>(total_steps) - warm;
  const double pct = rest <= 1.0 ? 1.0 : std::min(1.0, (s - warm) / (rest - 1.0));
  return annealing_cos(base_lr, start / kOneCycleFinalDiv, pct);
}

RunReport train_run(const TrainConfig& config, const Dataset& train, const Dataset& test, std::uint64_t seed,
                    const ProgressFn& progress) {
  config.validate();
  check_geometry(config.model, train);
  check_geometry(config.model, test);
  if (train.size() == 0 || test.size() == 0) throw ContractError("train and test splits must be non-empty");

  RunReport report;
  report.config = config;
  report.activation = config.model.activation.name();
  report.seed = seed;

  Model model = build_model(config.model, seed);
  report.lr_used = config.lr;
  if (config.lr_find) {
    report.lr_find = lr_find(model, train, config.lr_find_options, config.batch_size, seed);
    report.lr_used = report.lr_find->suggested_lr;
    if (progress) progress(report.activation + " seed " + std::to_string(seed) + ": lr finder suggests " +
                           std::to_string(report.lr_used));
  }

  Adam adam(model.parameters(), AdamConfig{.lr = report.lr_used});
  auto rng = data_rng(seed, 1);
  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs && !report.diverged; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled_indices(train.size(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++global_step) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Batch b = make_batch(train, std::span<const std::size_t>(order).subspan(start, end - start));
      if (config.augment) b = augment(b, kFlipProb, kPad, rng);
      if (config.mixup) b = mixup(b, config.mixup_alpha, rng);
      adam.set_lr(scheduled_lr(config.schedule, report.lr_used, global_step, total_steps));
      const StepOutcome out = train_step(model, adam, b);
      if (global_step == 0) report.initial_loss = out.loss;
      if (!std::isfinite(out.loss)) {
        report.diverged = true;
        if (progress) progress(report.activation + " seed " + std::to_string(seed) + ": diverged at step " +
                               std::to_string(global_step));
        break;
      }
      if (!out.applied) ++report.skipped_steps;
      loss_sum += out.loss * static_cast<double>(b.size());
      seen += b.size();
    }
    if (report.diverged) break;
    const EvalResult ev = evaluate(model, test, config.eval_batch_size);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.val_loss = ev.loss;
    m.accuracy = ev.accuracy;
    m.top5_accuracy = ev.top5_accuracy;
    m.epoch_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(m);
    if (progress) progress(format_epoch(report.activation, seed, m));
  }
  report.snapshots = snapshot_model(model);
  report.final_state_hash = model.state_hash();
  return report;
}

std::vector<RunReport> train(const TrainConfig& config, const Dataset& train, const Dataset& test,
                             const ProgressFn& progress) {
  config.validate();
  std::vector<RunReport> reports;
  for (std::uint64_t seed : config.seeds) reports.push_back(train_run(config, train, test, seed, progress));
  return reports;
}

const std::vector<std::string>& summary_metrics() {
  static const std::vector<std::string> names{"accuracy",   "top5_accuracy", "train_loss",
                                              "val_loss",   "epoch_seconds", "lr_used"};
  return names;
}

namespace {

bool higher_is_better(const std::string& metric) { return metric == "accuracy" || metric == "top5_accuracy"; }

std::optional<double> metric_value(const RunReport& r, const std::string& metric) {
  if (metric == "lr_used") return r.lr_used;
  if (r.diverged || r.epochs.empty()) return std::nullopt;
  const EpochMetrics& last = r.epochs.back();
  if (metric == "accuracy") return last.accuracy;
  if (metric == "top5_accuracy") return last.top5_accuracy;
  if (metric == "train_loss") return last.train_loss;
  if (metric == "val_loss") return last.val_loss;
  double s = 0.0;
  for (const auto& e : r.epochs) s += e.epoch_seconds;
  return s / static_cast<double>(r.epochs.size());
}

std::vector<std::string> activation_order(const std::vector<RunReport>& reports) {
  std::vector<std::string> names;
  for (const auto& r : reports) {
    if (std::find(names.begin(), names.end(), r.activation) == names.end()) names.push_back(r.activation);
  }
  return names;
}

}  // namespace

std::vector<SummaryRow> aggregate(const std::vector<RunReport>& reports) {
  const auto names = activation_order(reports);
  std::vector<SummaryRow> rows;
  for (const auto& metric : summary_metrics()) {
    const std::size_t first = rows.size();
    for (const auto& name : names) {
      SummaryRow row{name, metric, std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN(), 0};
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : reports) {
        if (r.activation != name) continue;
        if (const auto v = metric_value(r, metric)) {
          sum += *v;
          row.max = n == 0 ? *v : std::max(row.max, *v);
          ++n;
        }
      }
      if (n > 0) row.mean = sum / static_cast<double>(n);
      rows.push_back(row);
    }
    std::vector<std::size_t> order(rows.size() - first);
    std::iota(order.begin(), order.end(), first);
    const bool higher = higher_is_better(metric);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double x = rows[a].mean, y = rows[b].mean;
      if (std::isnan(x) || std::isnan(y)) return !std::isnan(x) && std::isnan(y);
      return higher ? x > y : x < y;
    });
    for (std::size_t i = 0; i < order.size(); ++i) rows[order[i]].rank = i + 1;
  }
  return rows;
}

std::vector<LRRange> lr_ranges(const std::vector<RunReport>& reports) {
  std::vector<LRRange> out;
  for (const auto& name : activation_order(reports)) {
    LRRange range{name, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& r : reports) {
      if (r.activation != name) continue;
      range.min = std::min(range.min, r.lr_used);
      range.max = std::max(range.max, r.lr_used);
    }
    out.push_back(range);
  }
  return out;
}

}  // namespace actbench
