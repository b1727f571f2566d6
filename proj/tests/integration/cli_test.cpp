#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "actbench/cli.hpp"
#include "actbench/csv.hpp"
#include "actbench/report.hpp"

namespace actbench {
namespace {

namespace fs = std::filesystem;

fs::path data_root() {
  const char* env = std::getenv("ACTBENCH_DATA_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("/root/data");
}

bool have(const char* dataset) { return fs::exists(data_root() / dataset); }

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class Scratch {
 public:
  explicit Scratch(const std::string& tag) : path_(fs::temp_directory_path() / ("actbench_cli_" + tag)) {
    fs::remove_all(path_);
  }
  ~Scratch() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& sub = "") const { return (sub.empty() ? path_ : path_ / sub).string(); }

 private:
  fs::path path_;
};

std::vector<std::string> mnist_train(const std::string& activation, const std::string& out) {
  return {"train",        "--arch",          "lenet5", "--activation", activation, "--dataset",
          "mnist",        "--data-dir",      data_root().string(),     "--epochs",  "1",
          "--seeds",      "1",               "--train-limit",          "512",       "--test-limit",
          "128",          "--out",           out,      "--quiet"};
}

std::vector<std::string> cifar_train(const std::string& out) {
  return {"train",         "--arch",  "mini_resnet", "--activation", "dp_relu", "--data-dir", data_root().string(),
          "--epochs",      "1",       "--seeds",     "1,2",          "--batch-size", "32", "--train-limit", "64",
          "--test-limit",  "32",      "--out",       out,            "--quiet"};
}

TEST(CliUsage, HelpExitsZeroAndDoesNoWork) {
  Scratch dir("help");
  for (const char* sub : {"train", "lr-find", "benchmark", "analyze", "gradcheck"}) {
    const Outcome o = run({sub, "--help", "--out", dir.str()});
    EXPECT_EQ(o.code, 0) << sub;
    EXPECT_NE(o.out.find("--"), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_FALSE(fs::exists(dir.path()));
}

TEST(CliUsage, UnknownFlagRejectedBeforeWork) {
  Scratch dir("unknown");
  const Outcome o = run({"train", "--activation", "relu", "--data-dir", data_root().string(), "--out", dir.str(),
                         "--frobnicate"});
  EXPECT_EQ(o.code, 1);
  EXPECT_FALSE(fs::exists(dir.path()));
  EXPECT_EQ(run({"gradcheck", "--trails", "3"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"fly"}).code, 1);
}

TEST(CliUsage, UnknownActivationListsRegistry) {
  Scratch dir("bogus");
  const Outcome o = run({"train", "--activation", "bogus", "--data-dir", data_root().string(), "--out", dir.str()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("dual_line"), std::string::npos);
  EXPECT_NE(o.err.find("wrapped_elu"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir.path()));
}

TEST(CliUsage, MissingDataIsUsageError) {
  Scratch dir("nodata");
  const Outcome o = run({"train", "--activation", "relu", "--data-dir", dir.str("nowhere"), "--out", dir.str()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("train-images-idx3-ubyte"), std::string::npos);
}

TEST(CliUsage, ArchitectureAndDatasetMustAgree) {
  EXPECT_EQ(run({"train", "--arch", "mini_resnet", "--dataset", "mnist", "--activation", "relu"}).code, 1);
  EXPECT_EQ(run({"train", "--arch", "lenet7", "--activation", "relu"}).code, 1);
  EXPECT_EQ(run({"train", "--activation", "relu", "--lr", "0.1", "--lr-find"}).code, 1);
  EXPECT_EQ(run({"train", "--activation", "relu", "--dataset", "mnist", "--mixup"}).code, 1);
  EXPECT_EQ(run({"train", "--activation", "relu", "--augment"}).code, 1);
}

TEST(CliUsage, DataDirFallsBackToEnvironment) {
  Scratch dir("env");
  ::setenv("ACTBENCH_DATA_DIR", dir.str("nowhere").c_str(), 1);
  const Outcome o = run({"train", "--activation", "relu", "--out", dir.str()});
  ::unsetenv("ACTBENCH_DATA_DIR");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("nowhere"), std::string::npos);
}

TEST(CliTrain, SmokeRunWritesOneReport) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch dir("smoke");
  const Outcome o = run(mnist_train("dual_line", dir.str("nested/out")));
  ASSERT_EQ(o.code, 0) << o.err;
  const auto reports = list_reports(dir.path() / "nested/out");
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].filename(), "lenet5_dual_line_seed1.json");
  const RunReport r = read_report(reports[0]);
  EXPECT_EQ(r.epochs.size(), 1u);
  EXPECT_EQ(r.lr_used, 1e-3);
  EXPECT_TRUE(fs::exists(dir.path() / "nested/out/summary.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "nested/out/lr_range.csv"));
}

TEST(CliTrain, LrFindSetsRateUsed) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch dir("lrfind");
  auto args = mnist_train("dp_relu", dir.str());
  args.push_back("--lr-find");
  const Outcome o = run(args);
  ASSERT_EQ(o.code, 0) << o.err;
  const RunReport r = read_report(dir.path() / "lenet5_dp_relu_seed1.json");
  ASSERT_TRUE(r.lr_find.has_value());
  EXPECT_EQ(r.lr_used, r.lr_find->suggested_lr);
  EXPECT_GE(r.lr_used, r.lr_find->min_lr_bound);
  EXPECT_LE(r.lr_used, r.lr_find->max_lr_bound);
}

TEST(CliTrain, RepeatedRunIsByteIdentical) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch a("det_a"), b("det_b");
  ASSERT_EQ(run(mnist_train("dual_line", a.str())).code, 0);
  ASSERT_EQ(run(mnist_train("dual_line", b.str())).code, 0);
  EXPECT_EQ(read_text(a.path() / "lenet5_dual_line_seed1.json"), read_text(b.path() / "lenet5_dual_line_seed1.json"));
}

TEST(CliLrFind, WritesCurveInsideRange) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch dir("lrcurve");
  const Outcome o = run({"lr-find", "--activation", "relu", "--data-dir", data_root().string(), "--train-limit",
                         "2048", "--iters", "30", "--min-lr", "1e-5", "--max-lr", "1", "--out", dir.str()});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = read_csv(dir.path() / "lenet5_relu_seed1_lr_find.csv");
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"lr", "loss", "smoothed"}));
  const auto pos = o.out.find("suggested_lr ");
  ASSERT_NE(pos, std::string::npos);
  const double lr = std::stod(o.out.substr(pos + 13));
  EXPECT_GE(lr, 1e-5);
  EXPECT_LE(lr, 1.0);
}

TEST(CliBenchmark, RankedTableForTwoActivations) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch dir("bench");
  const Outcome o = run({"benchmark", "--arch", "lenet4", "--activations", "relu,dual_line", "--seeds", "1",
                         "--epochs", "1", "--data-dir", data_root().string(), "--train-limit", "512", "--test-limit",
                         "128", "--out", dir.str(), "--quiet"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = read_csv(dir.path() / "benchmark.csv");
  ASSERT_EQ(rows.size(), 3u);
  const auto& header = rows[0];
  for (const auto& r : rows) EXPECT_EQ(r.size(), header.size());
  std::size_t rank_columns = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].ends_with("_rank")) {
      ++rank_columns;
      std::set<std::string> ranks{rows[1][c], rows[2][c]};
      EXPECT_EQ(ranks, (std::set<std::string>{"1", "2"})) << header[c];
    }
    if (header[c] == "epoch_seconds_mean") {
      EXPECT_GT(std::stod(rows[1][c]), 0.0);
      EXPECT_GT(std::stod(rows[2][c]), 0.0);
    }
  }
  EXPECT_GE(rank_columns, 5u);
  EXPECT_EQ(list_reports(dir.path()).size(), 2u);
}

TEST(CliBenchmark, ParallelJobsMatchSequential) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch seq("bench_seq"), par("bench_par");
  auto args = [&](const std::string& out, const std::string& jobs) {
    return std::vector<std::string>{"benchmark",   "--arch",       "lenet4", "--activations", "relu,dp_relu",
                                    "--seeds",     "3",            "--epochs", "1", "--data-dir",
                                    data_root().string(), "--train-limit", "256", "--test-limit", "64",
                                    "--out",       out,            "--jobs",  jobs, "--quiet"};
  };
  ASSERT_EQ(run(args(seq.str(), "1")).code, 0);
  ASSERT_EQ(run(args(par.str(), "2")).code, 0);
  for (const char* name : {"lenet4_relu_seed3.json", "lenet4_dp_relu_seed3.json"}) {
    EXPECT_EQ(read_text(seq.path() / name), read_text(par.path() / name)) << name;
  }
}

TEST(CliBenchmark, RejectsUnknownNameBeforeTraining) {
  Scratch dir("bench_bad");
  const Outcome o = run({"benchmark", "--activations", "relu,nope", "--data-dir", data_root().string(), "--out",
                         dir.str()});
  EXPECT_EQ(o.code, 1);
  EXPECT_FALSE(fs::exists(dir.path()));
}

TEST(CliAnalyze, LeNetReportsGivePositionsOnly) {
  if (!have("mnist")) GTEST_SKIP() << "MNIST not found";
  Scratch dir("an_lenet");
  ASSERT_EQ(run(mnist_train("dual_line", dir.str("reports"))).code, 0);
  const Outcome o = run({"analyze", "--reports", dir.str("reports"), "--out", dir.str("analysis")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.err.find("block grouping"), std::string::npos) << o.err;
  EXPECT_TRUE(fs::exists(dir.path() / "analysis/positions.csv"));
  EXPECT_FALSE(fs::exists(dir.path() / "analysis/blocks.csv"));
  EXPECT_EQ(read_csv(dir.path() / "analysis/positions.csv").size(), 1u + 4u);
}

TEST(CliAnalyze, ResNetReportsGiveEveryFamilyIdempotently) {
  if (!have("cifar10")) GTEST_SKIP() << "CIFAR-10 not found";
  Scratch dir("an_resnet");
  ASSERT_EQ(run(cifar_train(dir.str("reports"))).code, 0);
  ASSERT_EQ(run({"analyze", "--reports", dir.str("reports"), "--out", dir.str("one")}).code, 0);
  const Outcome o = run({"analyze", "--reports", dir.str("reports"), "--out", dir.str("two")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("blocks after the first"), std::string::npos);
  for (const char* name : {"positions.csv", "blocks.csv", "boxstats.csv", "envelope.csv", "pattern.csv"}) {
    ASSERT_TRUE(fs::exists(dir.path() / "one" / name)) << name;
    EXPECT_EQ(read_text(dir.path() / "one" / name), read_text(dir.path() / "two" / name)) << name;
  }
  EXPECT_EQ(read_csv(dir.path() / "one/pattern.csv").size(), 1u + 9u);
}

TEST(CliAnalyze, MalformedReportNamesFile) {
  Scratch dir("an_bad");
  write_text(dir.path() / "reports/broken_seed1.json", "{\"schema_version\": 1, \"activation\": ");
  const Outcome o = run({"analyze", "--reports", dir.str("reports"), "--out", dir.str("out")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("broken_seed1.json"), std::string::npos) << o.err;
}

TEST(CliAnalyze, MissingDirectoryIsUsageError) {
  Scratch dir("an_missing");
  EXPECT_EQ(run({"analyze", "--reports", dir.str("none"), "--out", dir.str("out")}).code, 1);
}

TEST(CliGradcheck, LearnableActivationsPass) {
  for (const char* name : {"dp_relu", "dual_line", "wrapped_gelu"}) {
    const Outcome o = run({"gradcheck", "--activation", name, "--trials", "100"});
    EXPECT_EQ(o.code, 0) << name << o.out << o.err;
    EXPECT_NE(o.out.find("PASS"), std::string::npos);
  }
}

TEST(CliGradcheck, CorruptedBackwardFails) {
  const Outcome o = run({"gradcheck", "--activation", "dual_line", "--inject-fault", "0.01"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("dual_line"), std::string::npos);
  EXPECT_NE(o.out.find("FAIL"), std::string::npos);
}

TEST(CliGradcheck, HiddenFlagStaysOutOfHelp) {
  const Outcome o = run({"gradcheck", "--help"});
  EXPECT_EQ(o.out.find("inject"), std::string::npos);
}

}  // namespace
}  // namespace actbench
