#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "actbench/data.hpp"
#include "actbench/models.hpp"
#include "actbench/snapshot.hpp"

namespace actbench {

/// The learning-rate sweep could not take a single finite step.
class SweepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Schedule { kConstant, kOneCycle };

std::string_view schedule_name(Schedule s);
Schedule parse_schedule(std::string_view name);

struct LRFindOptions {
  double min_lr = 1e-6;
  double max_lr = 1.0;
  std::size_t num_iters = 100;
  double smoothing = 0.98;
  /// The sweep stops once the smoothed loss exceeds this multiple of the best.
  double divergence_factor = 4.0;
  /// Points ignored at each end when locating the steepest descent, unless
  /// the sweep is too short to spare them.
  std::size_t skip_start = 10;
  std::size_t skip_end = 5;
};

struct LRFindResult {
  std::vector<double> lrs;
  std::vector<double> losses;
  std::vector<double> smoothed;
  /// Rate at the steepest descent of the smoothed loss against log lr.
  double suggested_lr = 0.0;
  /// Rate at the smoothed minimum, divided by ten.
  double min_loss_lr = 0.0;
  double min_lr_bound = 0.0;
  double max_lr_bound = 0.0;
  bool stopped_early = false;
};

/// Takes one optimisation step at the given rate and returns the loss
/// measured before the step.
using LRStepFn = std::function<double(double lr)>;

/// Log-spaced rate sweep over any steppable problem.
LRFindResult lr_sweep(const LRStepFn& step, const LRFindOptions& options);

struct TrainConfig {
  ModelConfig model;
  DatasetName dataset = DatasetName::kMnist;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  /// Replace `lr` by a finder estimate, made per seed.
  bool lr_find = false;
  LRFindOptions lr_find_options;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool mixup = false;
  double mixup_alpha = 0.2;
  /// Random flip and reflect-pad crop of training batches.
  bool augment = false;
  Schedule schedule = Schedule::kConstant;
  /// Recorded with the report; 0 means the full split.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t eval_batch_size = 100;

  /// Throws ContractError on an invalid combination.
  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double accuracy = 0.0;
  double top5_accuracy = 0.0;
  double epoch_seconds = 0.0;
};

struct RunReport {
  TrainConfig config;
  std::string activation;
  std::uint64_t seed = 0;
  double lr_used = 0.0;
  std::optional<LRFindResult> lr_find;
  /// Loss of the first mini-batch before any update.
  double initial_loss = 0.0;
  bool diverged = false;
  /// Optimizer steps rejected because of a non-finite gradient.
  std::size_t skipped_steps = 0;
  std::vector<EpochMetrics> epochs;
  std::vector<ParamSnapshot> snapshots;
  std::uint64_t final_state_hash = 0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  double top5_accuracy = 0.0;
};

/// Metrics for precomputed logits. Ties in argmax and top-5 go to the
/// lowest class index.
EvalResult evaluate_logits(const Tensor& logits, const Labels& labels);

/// Inference-mode pass over a whole dataset.
EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 100);

/// Rate sweep with Adam on a copy of `model`; `model` is not modified.
LRFindResult lr_find(const Model& model, const Dataset& data, const LRFindOptions& options, std::size_t batch_size,
                     std::uint64_t seed);

/// Learning rate at step `step` of `total_steps`.
double scheduled_lr(Schedule schedule, double base_lr, std::size_t step, std::size_t total_steps);

using ProgressFn = std::function<void(const std::string&)>;

RunReport train_run(const TrainConfig& config, const Dataset& train, const Dataset& test, std::uint64_t seed,
                    const ProgressFn& progress = {});

/// One report per configured seed.
std::vector<RunReport> train(const TrainConfig& config, const Dataset& train, const Dataset& test,
                             const ProgressFn& progress = {});

struct SummaryRow {
  std::string activation;
  std::string metric;
  double mean = 0.0;
  double max = 0.0;
  std::size_t rank = 0;
};

struct LRRange {
  std::string activation;
  double min = 0.0;
  double max = 0.0;
};

/// Final-epoch metrics averaged over each activation's completed runs and
/// ranked across activations (1 = best).
std::vector<SummaryRow> aggregate(const std::vector<RunReport>& reports);

/// Smallest and largest rate used per activation.
std::vector<LRRange> lr_ranges(const std::vector<RunReport>& reports);

/// Metric names in output order.
const std::vector<std::string>& summary_metrics();

}  // namespace actbench
