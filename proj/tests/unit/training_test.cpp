#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <set>

#include "actbench/errors.hpp"
#include "actbench/report.hpp"
#include "actbench/training.hpp"

namespace actbench {
namespace {

namespace fs = std::filesystem;

/// Gradient descent on f(w) = w²/2 from w = 1.
LRStepFn quadratic_gd() {
  auto w = std::make_shared<double>(1.0);
  return [w](double lr) {
    const double loss = 0.5 * *w * *w;
    *w -= lr * *w;
    return loss;
  };
}

/// A small synthetic MNIST-shaped dataset whose label is recoverable from
/// the brightest quadrant row.
Dataset synthetic_digits(std::size_t n, std::uint64_t seed, Split split) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 40);
  std::vector<std::uint8_t> px(n * 784);
  Labels labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    labels[i] = label;
    for (std::size_t p = 0; p < 784; ++p) px[i * 784 + p] = static_cast<std::uint8_t>(noise(rng));
    const std::size_t row = 2 + static_cast<std::size_t>(label) * 2;
    for (std::size_t c = 4; c < 24; ++c) {
      px[i * 784 + row * 28 + c] = 250;
      px[i * 784 + (row + 1) * 28 + c] = 250;
    }
  }
  return Dataset(DatasetName::kMnist, split, {1, 28, 28}, std::move(px), std::move(labels));
}

TrainConfig small_config(const ActivationSpec& act) {
  TrainConfig c;
  c.model = ModelConfig{.arch = Arch::kLeNet4, .activation = act};
  c.epochs = 2;
  c.batch_size = 32;
  c.lr = 2e-3;
  c.seeds = {1};
  return c;
}

TEST(LRSweep, QuadraticSuggestionMatchesOracle) {
  const LRFindOptions opts{.min_lr = 1e-4, .max_lr = 10.0, .num_iters = 100};
  const LRFindResult r = lr_sweep(quadratic_gd(), opts);
  EXPECT_EQ(r.lrs.size(), 100u);
  EXPECT_FALSE(r.stopped_early);
  EXPECT_NEAR(r.suggested_lr, 0.1519911082952933, 1e-9);
  EXPECT_NEAR(r.min_loss_lr, 1.0, 1e-9);
  // Gradient descent on w²/2 is optimal at step 1.
  EXPECT_GT(r.suggested_lr, 0.1);
  EXPECT_LT(r.suggested_lr, 10.0);
}

TEST(LRSweep, SuggestionSkipsSweepEndsWhenLongEnough) {
  const LRFindResult wide = lr_sweep(quadratic_gd(), {.min_lr = 1e-6, .max_lr = 10.0, .num_iters = 100});
  EXPECT_NEAR(wide.suggested_lr, 0.23644894126454072, 1e-9);
  const LRFindResult mid = lr_sweep(quadratic_gd(), {.min_lr = 1e-4, .max_lr = 10.0, .num_iters = 37});
  EXPECT_NEAR(mid.suggested_lr, 0.40842386526745217, 1e-9);
  // Too short to skip 15 points: the whole curve is searched.
  const LRFindResult tiny = lr_sweep(quadratic_gd(), {.min_lr = 1e-4, .max_lr = 10.0, .num_iters = 12});
  EXPECT_NEAR(tiny.suggested_lr, 1.232846739442066, 1e-9);
}

TEST(LRSweep, StopsOnceLossExceedsFourTimesBest) {
  const LRFindOptions opts{.min_lr = 1e-5, .max_lr = 100.0, .num_iters = 100};
  const LRFindResult r = lr_sweep(quadratic_gd(), opts);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.lrs.size(), 88u);
  EXPECT_NEAR(r.suggested_lr, 0.24201282647943834, 1e-9);
}

TEST(LRSweep, RatesStrictlyIncreaseWithinBounds) {
  const LRFindOptions opts{.min_lr = 1e-4, .max_lr = 10.0, .num_iters = 37};
  const LRFindResult r = lr_sweep(quadratic_gd(), opts);
  EXPECT_DOUBLE_EQ(r.lrs.front(), 1e-4);
  EXPECT_DOUBLE_EQ(r.lrs.back(), 10.0);
  for (std::size_t i = 1; i < r.lrs.size(); ++i) EXPECT_LT(r.lrs[i - 1], r.lrs[i]);
  EXPECT_GE(r.suggested_lr, r.min_lr_bound);
  EXPECT_LE(r.suggested_lr, r.max_lr_bound);
}

TEST(LRSweep, ImmediateDivergenceIsSweepError) {
  const LRStepFn nan_step = [](double) { return std::nan(""); };
  try {
    lr_sweep(nan_step, LRFindOptions{});
    FAIL() << "expected SweepError";
  } catch (const SweepError& e) {
    EXPECT_NE(std::string(e.what()).find("min_lr"), std::string::npos);
  }
}

TEST(LRSweep, LaterNonFiniteLossStopsTheSweep) {
  int calls = 0;
  const LRStepFn step = [&calls](double) { return ++calls < 20 ? 1.0 / calls : std::nan(""); };
  const LRFindResult r = lr_sweep(step, LRFindOptions{.num_iters = 50});
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.lrs.size(), 19u);
}

TEST(LRSweep, RejectsBadRanges) {
  EXPECT_THROW(lr_sweep(quadratic_gd(), {.min_lr = 0.0}), ContractError);
  EXPECT_THROW(lr_sweep(quadratic_gd(), {.min_lr = 1.0, .max_lr = 0.5}), ContractError);
  EXPECT_THROW(lr_sweep(quadratic_gd(), {.num_iters = 9}), ContractError);
}

TEST(Evaluate, OneHotOfTruthIsPerfect) {
  const Labels labels{3, 0, 9, 4};
  Tensor logits({4, 10});
  for (std::size_t i = 0; i < 4; ++i) logits[i * 10 + static_cast<std::size_t>(labels[i])] = 1.0;
  const EvalResult r = evaluate_logits(logits, labels);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.top5_accuracy, 1.0);
}

TEST(Evaluate, UniformLogitsBreakTiesTowardLowestIndex) {
  Labels labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<int>(i % 10);
  const EvalResult r = evaluate_logits(Tensor({100, 10}), labels);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.1);
  EXPECT_DOUBLE_EQ(r.top5_accuracy, 0.5);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
}

TEST(Evaluate, LossMatchesDirectCrossEntropy) {
  const Tensor logits = Tensor::from_rows({{2.0, -1.0, 0.5}, {0.0, 3.0, -2.0}});
  const EvalResult r = evaluate_logits(logits, {2, 1});
  // −log softmax, computed by hand.
  const double l0 = std::log(std::exp(2.0) + std::exp(-1.0) + std::exp(0.5)) - 0.5;
  const double l1 = std::log(1.0 + std::exp(3.0) + std::exp(-2.0)) - 3.0;
  EXPECT_NEAR(r.loss, (l0 + l1) / 2, 1e-14);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.top5_accuracy, 1.0);
}

TEST(Schedule, ConstantAndOneCycleShape) {
  EXPECT_EQ(scheduled_lr(Schedule::kConstant, 0.01, 17, 100), 0.01);
  EXPECT_NEAR(scheduled_lr(Schedule::kOneCycle, 0.01, 0, 100), 0.01 / 25, 1e-15);
  EXPECT_NEAR(scheduled_lr(Schedule::kOneCycle, 0.01, 30, 100), 0.01, 1e-15);
  EXPECT_NEAR(scheduled_lr(Schedule::kOneCycle, 0.01, 99, 100), 0.01 / 25 / 1e4, 1e-15);
  double prev = 0.0;
  for (std::size_t s = 0; s <= 30; ++s) {
    const double lr = scheduled_lr(Schedule::kOneCycle, 0.01, s, 100);
    EXPECT_GE(lr, prev);
    prev = lr;
  }
  EXPECT_EQ(parse_schedule("one_cycle"), Schedule::kOneCycle);
  EXPECT_THROW(parse_schedule("step"), RegistryError);
}

RunReport fake_report(const std::string& activation, double acc, double loss, double lr) {
  RunReport r;
  r.activation = activation;
  r.lr_used = lr;
  r.epochs.push_back({1, loss, loss, acc, std::min(1.0, acc + 0.05), 2.0});
  return r;
}

TEST(Aggregate, SingleReportMeansAreItsValues) {
  const auto rows = aggregate({fake_report("relu", 0.9, 0.3, 1e-3)});
  ASSERT_EQ(rows.size(), summary_metrics().size());
  EXPECT_EQ(rows[0].metric, "accuracy");
  EXPECT_EQ(rows[0].mean, 0.9);
  EXPECT_EQ(rows[0].max, 0.9);
  EXPECT_EQ(rows[0].rank, 1u);
}

TEST(Aggregate, MeansMaxesAndRanks) {
  const std::vector<RunReport> reports{fake_report("relu", 0.9, 0.3, 1e-3), fake_report("relu", 1.0, 0.1, 3e-3),
                                       fake_report("dual_line", 0.97, 0.15, 2e-3)};
  const auto rows = aggregate(reports);
  auto find = [&](const std::string& a, const std::string& m) {
    for (const auto& r : rows) {
      if (r.activation == a && r.metric == m) return r;
    }
    return SummaryRow{};
  };
  EXPECT_DOUBLE_EQ(find("relu", "accuracy").mean, 0.95);
  EXPECT_DOUBLE_EQ(find("relu", "accuracy").max, 1.0);
  EXPECT_EQ(find("dual_line", "accuracy").rank, 1u);
  EXPECT_EQ(find("relu", "accuracy").rank, 2u);
  EXPECT_EQ(find("dual_line", "val_loss").rank, 1u);
  EXPECT_EQ(find("relu", "train_loss").rank, 2u);
  for (const auto& metric : summary_metrics()) {
    std::set<std::size_t> ranks;
    for (const auto& r : rows) {
      if (r.metric == metric) ranks.insert(r.rank);
    }
    EXPECT_EQ(ranks, (std::set<std::size_t>{1, 2})) << metric;
  }
  const auto ranges = lr_ranges(reports);
  ASSERT_EQ(ranges.size(), 2u);
  EXPECT_EQ(ranges[0].min, 1e-3);
  EXPECT_EQ(ranges[0].max, 3e-3);
}

TEST(Aggregate, DivergedRunsRankLast) {
  RunReport bad = fake_report("bad", 0.0, 0.0, 1.0);
  bad.diverged = true;
  bad.epochs.clear();
  const auto rows = aggregate({bad, fake_report("relu", 0.5, 1.0, 1e-3)});
  for (const auto& r : rows) {
    if (r.metric == "accuracy") EXPECT_EQ(r.rank, r.activation == "relu" ? 1u : 2u);
  }
}

TEST(Train, LearnsSyntheticDigits) {
  const Dataset train_set = synthetic_digits(320, 1, Split::kTrain);
  const Dataset test_set = synthetic_digits(100, 2, Split::kTest);
  const RunReport r = train_run(small_config({.kind = ActivationKind::kDualLine}), train_set, test_set, 1);
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.epochs[0].train_loss, r.initial_loss);
  EXPECT_GT(r.epochs.back().accuracy, 0.5);
  for (const auto& e : r.epochs) EXPECT_GE(e.top5_accuracy, e.accuracy);
  EXPECT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.skipped_steps, 0u);
}

TEST(Train, IdenticalInputsGiveIdenticalReports) {
  const Dataset train_set = synthetic_digits(96, 1, Split::kTrain);
  const Dataset test_set = synthetic_digits(40, 2, Split::kTest);
  TrainConfig c = small_config({.kind = ActivationKind::kDPReLU});
  c.epochs = 1;
  c.seeds = {4, 4, 5};
  const auto reports = train(c, train_set, test_set);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(report_json(reports[0]), report_json(reports[1]));
  EXPECT_NE(reports[0].final_state_hash, reports[2].final_state_hash);
}

TEST(Train, ReportDoesNotDependOnHeapLayout) {
  const Dataset train_set = synthetic_digits(96, 1, Split::kTrain);
  const Dataset test_set = synthetic_digits(40, 2, Split::kTest);
  TrainConfig c = small_config({.kind = ActivationKind::kDualLine});
  c.epochs = 1;
  const std::string reference = report_json(train_run(c, train_set, test_set, 9));
  for (std::size_t shift : {1u, 3u, 5u, 7u}) {
    std::vector<std::unique_ptr<double[]>> junk;
    for (std::size_t i = 0; i < 64; ++i) junk.emplace_back(new double[shift + i % 5]);
    EXPECT_EQ(report_json(train_run(c, train_set, test_set, 9)), reference) << "shift " << shift;
  }
}

TEST(Train, HugeRateIsReportedAsDivergence) {
  const Dataset train_set = synthetic_digits(64, 1, Split::kTrain);
  const Dataset test_set = synthetic_digits(20, 2, Split::kTest);
  TrainConfig c = small_config({.kind = ActivationKind::kReLU});
  c.lr = 1e300;
  c.epochs = 3;
  const RunReport r = train_run(c, train_set, test_set, 1);
  EXPECT_TRUE(r.diverged || r.skipped_steps > 0);
  EXPECT_LE(r.epochs.size(), 3u);
}

TEST(Train, RejectsMismatchedGeometry) {
  const Dataset d = synthetic_digits(10, 1, Split::kTrain);
  TrainConfig c = small_config({.kind = ActivationKind::kReLU});
  c.model.arch = Arch::kMiniResNet;
  EXPECT_THROW(train_run(c, d, d, 1), ContractError);
  c = small_config({.kind = ActivationKind::kReLU});
  c.seeds.clear();
  EXPECT_THROW(train(c, d, d), ContractError);
}

TEST(LRFind, LeavesTheModelUntouched) {
  const Dataset d = synthetic_digits(64, 1, Split::kTrain);
  const Model m = build_lenet4({.kind = ActivationKind::kDualLine}, 3);
  const auto before = m.state_hash();
  const LRFindOptions opts{.min_lr = 1e-5, .max_lr = 1.0, .num_iters = 12};
  const LRFindResult a = lr_find(m, d, opts, 16, 7);
  const LRFindResult b = lr_find(m, d, opts, 16, 7);
  EXPECT_EQ(m.state_hash(), before);
  EXPECT_EQ(a.suggested_lr, b.suggested_lr);
  EXPECT_GE(a.suggested_lr, 1e-5);
  EXPECT_LE(a.suggested_lr, 1.0);
}

TEST(Report, JsonRoundTrip) {
  const Dataset train_set = synthetic_digits(64, 1, Split::kTrain);
  const Dataset test_set = synthetic_digits(20, 2, Split::kTest);
  TrainConfig c = small_config({.kind = ActivationKind::kDualLine});
  c.epochs = 1;
  c.lr_find = true;
  c.lr_find_options = {.min_lr = 1e-5, .max_lr = 1.0, .num_iters = 10};
  const RunReport r = train_run(c, train_set, test_set, 3);
  ASSERT_TRUE(r.lr_find);
  EXPECT_EQ(r.lr_used, r.lr_find->suggested_lr);
  const std::string text = report_json(r);
  EXPECT_EQ(text.find("epoch_seconds"), std::string::npos);
  const RunReport back = parse_report(text, "memory");
  EXPECT_EQ(report_json(back), text);
  EXPECT_EQ(back.snapshots, r.snapshots);

  const fs::path dir = fs::temp_directory_path() / "actbench_report_roundtrip";
  fs::remove_all(dir);
  const fs::path p = write_report(r, dir);
  EXPECT_EQ(p.filename(), "lenet4_dual_line_seed3.json");
  EXPECT_EQ(list_reports(dir), std::vector<fs::path>{p});
  EXPECT_EQ(read_report(p).epochs[0].epoch_seconds, r.epochs[0].epoch_seconds);
  fs::remove_all(dir);
}

TEST(Report, MalformedJsonNamesTheSource) {
  try {
    parse_report("{\"schema_version\": 1}", "bad.json");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
  }
  EXPECT_THROW(parse_report("not json", "x"), FormatError);
}

}  // namespace
}  // namespace actbench
