#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "actbench/errors.hpp"
#include "actbench/gradcheck.hpp"
#include "actbench/ops.hpp"
#include "actbench/optim.hpp"
#include "test_support.hpp"

namespace actbench {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

TEST(Tensor, ShapeMustCoverData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4}), DimensionError);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  Tape tape;
  auto eye = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  auto b = tape.constant(Tensor::from_rows({{5, 6}, {7, 8}}));
  EXPECT_EQ(tape.value(matmul(tape, eye, b)), Tensor::from_rows({{5, 6}, {7, 8}}));

  auto row = tape.constant(Tensor::from_rows({{1, 2}}));
  auto col = tape.constant(Tensor::from_rows({{3}, {4}}));
  EXPECT_DOUBLE_EQ(tape.value(matmul(tape, row, col)).item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  try {
    matmul(tape, a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  Tape tape;
  auto ia = tape.variable(a);
  tape.backward(sum(tape, matmul(tape, ia, tape.constant(b))));
  auto g = tape.grad_or_empty(ia);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g[i * 4 + k], b[k * 2] + b[k * 2 + 1], 1e-14);
  }
  auto r = gradcheck([&](Tape& t, NodeId x) { return sum(t, matmul(t, x, t.constant(b))); }, a, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(Conv2d, SumOfNineOnes) {
  Tape tape;
  auto x = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  auto k = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  auto b = tape.constant(Tensor({1}, 0.0));
  const Tensor& y = tape.value(conv2d(tape, x, k, b));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  std::mt19937_64 rng(2);
  Tape tape;
  auto x = tape.constant(random_tensor({2, 3, 6, 6}, rng));
  auto k = tape.constant(Tensor({2, 3, 3, 3}, 0.0));
  auto b = tape.constant(Tensor({2}, std::vector<double>{0.5, -1.25}));
  const Tensor& y = tape.value(conv2d(tape, x, k, b, {.stride = 1, .padding = 1}));
  ASSERT_EQ(y.shape(), (Shape{2, 2, 6, 6}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], ((i / 36) % 2 == 0) ? 0.5 : -1.25);
}

TEST(Conv2d, OutputGeometryWithStrideAndPadding) {
  Tape tape;
  auto x = tape.constant(Tensor({1, 2, 7, 9}, 1.0));
  auto k = tape.constant(Tensor({3, 2, 3, 3}, 1.0));
  const Tensor& y = tape.value(conv2d(tape, x, k, std::nullopt, {.stride = 2, .padding = 1}));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 4, 5}));
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
  Tape tape;
  auto x = tape.constant(Tensor({1, 1, 3, 3}));
  auto k = tape.constant(Tensor({1, 1, 5, 5}));
  EXPECT_THROW(conv2d(tape, x, k, std::nullopt), DimensionError);
  EXPECT_NO_THROW(conv2d(tape, x, k, std::nullopt, {.stride = 1, .padding = 1}));
}

TEST(Conv2d, AllGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor k = random_tensor({4, 3, 5, 5}, rng);
  const Tensor b = random_tensor({4}, rng);
  const Tensor w = random_tensor({2, 4, 4, 4}, rng);

  auto wrt_x = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, conv2d(t, v, t.constant(k), t.constant(b)), w); }, x);
  auto wrt_k = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, conv2d(t, t.constant(x), v, t.constant(b)), w); }, k);
  auto wrt_b = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, conv2d(t, t.constant(x), t.constant(k), v), w); }, b);
  EXPECT_LT(wrt_x.max_rel_error, 1e-4);
  EXPECT_LT(wrt_k.max_rel_error, 1e-4);
  EXPECT_LT(wrt_b.max_rel_error, 1e-4);

  const Tensor w2 = random_tensor({2, 4, 4, 4}, rng);
  auto strided = gradcheck(
      [&](Tape& t, NodeId v) {
        return weighted_sum(t, conv2d(t, v, t.constant(k), t.constant(b), {.stride = 2, .padding = 2}), w2);
      },
      x);
  EXPECT_LT(strided.max_rel_error, 1e-4);
}

TEST(Conv2d, PointwiseKernelEqualsChannelMixingMatmul) {
  std::mt19937_64 rng(4);
  const std::size_t batch = 2, cin = 3, cout = 5, h = 4, w = 6;
  const Tensor x = random_tensor({batch, cin, h, w}, rng);
  const Tensor k = random_tensor({cout, cin, 1, 1}, rng);
  Tape tape;
  const Tensor y = tape.value(conv2d(tape, tape.constant(x), tape.constant(k), std::nullopt));
  auto kmat = tape.constant(k.reshaped({cout, cin}));
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor xb({cin, h * w});
    std::copy_n(x.data().begin() + b * cin * h * w, cin * h * w, xb.data().begin());
    const Tensor mixed = tape.value(matmul(tape, kmat, tape.constant(xb)));
    for (std::size_t i = 0; i < mixed.size(); ++i) EXPECT_NEAR(y[b * cout * h * w + i], mixed[i], 1e-12);
  }
}

TEST(MaxPool, MaxOfFour) {
  Tape tape;
  auto x = tape.constant(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(tape.value(maxpool2d(tape, x, 2)).item(), 4.0);
}

TEST(MaxPool, TiesRouteGradientToFirstElement) {
  Tape tape;
  auto x = tape.variable(Tensor({1, 1, 4, 4}, 7.0));
  auto y = maxpool2d(tape, x, 2);
  for (double v : tape.value(y).data()) EXPECT_EQ(v, 7.0);
  tape.backward(sum(tape, y));
  auto g = tape.grad_or_empty(x);
  const std::vector<double> want{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(std::vector<double>(g.begin(), g.end()), want);
}

TEST(MaxPool, NonDivisibleRejected) {
  Tape tape;
  EXPECT_THROW(maxpool2d(tape, tape.constant(Tensor({1, 1, 5, 4})), 2), DimensionError);
}

TEST(MaxPool, GradcheckAwayFromTies) {
  // Distinct values spaced far beyond epsilon.
  std::vector<double> vals(16);
  for (std::size_t i = 0; i < 16; ++i) vals[i] = static_cast<double>((i * 7) % 16) * 0.1;
  const Tensor x({1, 1, 4, 4}, vals);
  std::mt19937_64 rng(5);
  const Tensor w = random_tensor({1, 1, 2, 2}, rng);
  auto r = gradcheck([&](Tape& t, NodeId v) { return weighted_sum(t, maxpool2d(t, v, 2), w); }, x);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  Tape tape;
  auto z = tape.constant(Tensor({3, 10}, 0.7));
  EXPECT_NEAR(tape.value(softmax_cross_entropy(tape, z, {0, 4, 9})).item(), std::log(10.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, LargeLogitsDoNotOverflow) {
  Tape tape;
  auto z = tape.variable(Tensor::from_rows({{1000.0, 0.0}}));
  auto loss = softmax_cross_entropy(tape, z, {0});
  EXPECT_NEAR(tape.value(loss).item(), 0.0, 1e-12);
  tape.backward(loss);
  for (double g : tape.grad_or_empty(z)) EXPECT_TRUE(std::isfinite(g));
}

TEST(SoftmaxCrossEntropy, OutOfRangeLabelNamesIndex) {
  Tape tape;
  auto z = tape.constant(Tensor({2, 3}));
  try {
    softmax_cross_entropy(tape, z, {1, 3});
    FAIL();
  } catch (const LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  EXPECT_THROW(softmax_cross_entropy(tape, z, {-1, 0}), LabelError);
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Tensor z = random_tensor({4, 10}, rng, -3, 3);
  const Labels y{3, 0, 9, 5};
  auto r = gradcheck([&](Tape& t, NodeId v) { return softmax_cross_entropy(t, v, y); }, z);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(SoftmaxCrossEntropy, InvariantToPerRowShift) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({5, 7}, rng, -4, 4);
    Tensor shifted = z;
    for (std::size_t r = 0; r < 5; ++r) {
      const double c = shift(rng);
      for (std::size_t j = 0; j < 7; ++j) shifted[r * 7 + j] += c;
    }
    const Labels y{0, 6, 2, 3, 1};
    Tape tape;
    const double a = tape.value(softmax_cross_entropy(tape, tape.constant(z), y)).item();
    const double b = tape.value(softmax_cross_entropy(tape, tape.constant(shifted), y)).item();
    EXPECT_NEAR(a, b, 1e-10);
  }
}

TEST(Backward, IdentityLossHasUnitGradient) {
  Tape tape;
  auto x = tape.variable(Tensor::scalar(3.0));
  tape.backward(x);
  EXPECT_EQ(tape.grad_or_empty(x)[0], 1.0);
}

TEST(Backward, FanOutAccumulates) {
  Tape tape;
  auto x = tape.variable(Tensor::scalar(3.0));
  tape.backward(add(tape, x, x));
  EXPECT_EQ(tape.grad_or_empty(x)[0], 2.0);
}

TEST(Backward, TwoConsumersSumBranchGradients) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({6}, rng);
  const Tensor u = random_tensor({6}, rng);
  const Tensor v = random_tensor({6}, rng);
  auto branch_grad = [&](bool left, bool right) {
    Tape tape;
    auto ix = tape.variable(x);
    NodeId total = tape.constant(Tensor::scalar(0.0));
    if (left) total = add(tape, total, weighted_sum(tape, mul(tape, ix, ix), u));
    if (right) total = add(tape, total, weighted_sum(tape, scale(tape, ix, 3.0), v));
    tape.backward(total);
    auto g = tape.grad_or_empty(ix);
    return std::vector<double>(g.begin(), g.end());
  };
  const auto both = branch_grad(true, true);
  const auto l = branch_grad(true, false);
  const auto r = branch_grad(false, true);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(both[i], l[i] + r[i], 1e-14);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  auto x = tape.variable(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, VisitsEachNodeOnceInReverseOrder) {
  Tape tape;
  auto x = tape.variable(Tensor({3}, 1.0));
  auto y = mul(tape, x, x);
  auto z = add(tape, y, x);
  auto loss = sum(tape, z);
  tape.backward(loss);
  const auto& order = tape.last_backward_order();
  EXPECT_EQ(order, (std::vector<NodeId>{loss, z, y}));
  for (NodeId id = 0; id < tape.size(); ++id) {
    for (NodeId in : tape.inputs(id)) EXPECT_LT(in, id);
  }
}

TEST(Backward, ParameterLeavesAccumulateIntoParameterGrad) {
  Parameter p("w", ParamRole::kWeight, Tensor({2}, std::vector<double>{1.0, -2.0}));
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    auto w = tape.parameter(p);
    tape.backward(sum(tape, mul(tape, w, w)));
  }
  EXPECT_EQ(p.grad[0], 4.0);
  EXPECT_EQ(p.grad[1], -8.0);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({3, 2, 3, 3}, rng, -2, 2);
  const Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({2}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  auto wrt = [&](int which) {
    return gradcheck(
        [&, which](Tape& t, NodeId v) {
          BatchNormStats stats(2);
          auto ix = which == 0 ? v : t.constant(x);
          auto ig = which == 1 ? v : t.constant(gamma);
          auto ib = which == 2 ? v : t.constant(beta);
          return weighted_sum(t, batch_norm(t, ix, ig, ib, stats, true), w);
        },
        which == 0 ? x : which == 1 ? gamma : beta);
  };
  EXPECT_LT(wrt(0).max_rel_error, 1e-4);
  EXPECT_LT(wrt(1).max_rel_error, 1e-4);
  EXPECT_LT(wrt(2).max_rel_error, 1e-4);
}

TEST(BatchNorm, TrainingNormalisesAndUpdatesRunningStats) {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({4, 1, 2, 2}, rng, 3, 5);
  Tape tape;
  BatchNormStats stats(1);
  const Tensor& y = tape.value(batch_norm(tape, tape.constant(x), tape.constant(Tensor({1}, 1.0)),
                                          tape.constant(Tensor({1}, 0.0)), stats, true));
  double mean = 0.0, sq = 0.0, xm = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mean += y[i];
    sq += y[i] * y[i];
    xm += x[i];
  }
  EXPECT_NEAR(mean / 16, 0.0, 1e-12);
  EXPECT_NEAR(sq / 16, 1.0, 1e-3);
  EXPECT_NEAR(stats.mean[0], 0.1 * xm / 16, 1e-12);
}

TEST(GlobalAvgPool, GradcheckAndValue) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tape tape;
  const Tensor& y = tape.value(global_avg_pool(tape, tape.constant(x)));
  double s = 0.0;
  for (std::size_t i = 0; i < 16; ++i) s += x[i];
  EXPECT_NEAR(y[0], s / 16, 1e-14);
  const Tensor w = random_tensor({2, 3}, rng);
  auto r = gradcheck([&](Tape& t, NodeId v) { return weighted_sum(t, global_avg_pool(t, v), w); }, x);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Linear, MatchesMatmulPlusBiasAndGradchecks) {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({3, 5}, rng);
  const Tensor w = random_tensor({4, 5}, rng);
  const Tensor b = random_tensor({4}, rng);
  const Tensor mask = random_tensor({3, 4}, rng);
  Tape tape;
  const Tensor& y = tape.value(linear(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < 5; ++k) acc += x[i * 5 + k] * w[o * 5 + k];
      EXPECT_NEAR(y[i * 4 + o], acc, 1e-14);
    }
  }
  auto gx = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, linear(t, v, t.constant(w), t.constant(b)), mask); }, x);
  auto gw = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, linear(t, t.constant(x), v, t.constant(b)), mask); }, w);
  auto gb = gradcheck(
      [&](Tape& t, NodeId v) { return weighted_sum(t, linear(t, t.constant(x), t.constant(w), v), mask); }, b);
  EXPECT_LT(gx.max_rel_error, 1e-6);
  EXPECT_LT(gw.max_rel_error, 1e-6);
  EXPECT_LT(gb.max_rel_error, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParamsButCountsStep) {
  std::vector<double> w{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamState s(2, AdamConfig{.lr = 0.1});
  ASSERT_TRUE(adam_step(w, g, s));
  EXPECT_EQ(w, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {3.0, -0.25, 1e-3}) {
    std::vector<double> w{0.5};
    const std::vector<double> grad{g};
    AdamState s(1, AdamConfig{.lr = 0.01});
    adam_step(w, grad, s);
    EXPECT_NEAR(w[0], 0.5 - 0.01 * (g > 0 ? 1 : -1), 1e-6);
  }
}

TEST(Adam, DefaultsFollowTheProtocol) {
  AdamConfig c;
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.99);
  EXPECT_EQ(c.eps, 1e-8);
}

TEST(Adam, QuadraticBowlConverges) {
  // Oracle: an independent scalar simulation of the same recurrence.
  double ref_w = 5.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * ref_w;
    m = 0.9 * m + 0.1 * g;
    v = 0.99 * v + 0.01 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.99, t));
    ref_w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  ASSERT_LT(std::abs(ref_w), 0.1);

  std::vector<double> w{5.0};
  AdamState s(1, AdamConfig{.lr = 0.1});
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> g{2.0 * w[0]};
    adam_step(w, g, s);
  }
  EXPECT_NEAR(w[0], ref_w, 1e-12);
  EXPECT_LT(std::abs(w[0]), 0.1);
  for (double vi : s.v) EXPECT_GE(vi, 0.0);
}

TEST(Adam, NonFiniteGradientAbortsStep) {
  std::vector<double> w{1.0, 2.0};
  const std::vector<double> g{0.5, NAN};
  AdamState s(2, AdamConfig{});
  EXPECT_FALSE(adam_step(w, g, s));
  EXPECT_EQ(w, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(s.step, 0u);
}

TEST(Adam, OptimizerSkipsWholeStepOnAnyNonFinite) {
  std::vector<Parameter> ps;
  ps.emplace_back("a", ParamRole::kWeight, Tensor({1}, 1.0));
  ps.emplace_back("b", ParamRole::kWeight, Tensor({1}, 1.0));
  Adam opt(ps, AdamConfig{.lr = 0.1});
  ps[0].grad[0] = 1.0;
  ps[1].grad[0] = INFINITY;
  EXPECT_FALSE(opt.step(ps));
  EXPECT_EQ(ps[0].value[0], 1.0);
  ps[1].grad[0] = 1.0;
  EXPECT_TRUE(opt.step(ps));
  EXPECT_NEAR(ps[0].value[0], 0.9, 1e-8);
  EXPECT_EQ(opt.steps_taken(), 1u);
}

TEST(Gradcheck, LinearFunctionIsExact) {
  std::mt19937_64 rng(13);
  auto r = gradcheck([](Tape& t, NodeId x) { return sum(t, x); }, random_tensor({7}, rng), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-10);
}

TEST(Gradcheck, SumOfSquares) {
  const Tensor x({3}, std::vector<double>{1, 2, 3});
  auto r = gradcheck([](Tape& t, NodeId v) { return sum(t, mul(t, v, v)); }, x, 1e-5);
  EXPECT_EQ(r.analytic, (std::vector<double>{2, 4, 6}));
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Gradcheck, DetectsWrongGradient) {
  // scale() with a backward that disagrees with its forward.
  auto bad = [](Tape& t, NodeId x) {
    Tensor out = t.value(x);
    for (auto& v : out.storage()) v *= 2.0;
    auto y = t.record("bad_scale", std::move(out), {x}, [x](Tape& tp, NodeId self) {
      auto g = tp.grad(self);
      auto gx = tp.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.2 * g[i];
    });
    return sum(t, y);
  };
  auto r = gradcheck(bad, Tensor({4}, 1.0));
  EXPECT_GT(r.max_rel_error, 1e-2);
}

TEST(Gradcheck, NonFiniteFunctionIsAnOracleError) {
  auto f = [](Tape& t, NodeId x) {
    Tensor out = t.value(x);
    out[0] = out[0] > 1.0 ? NAN : out[0];
    return sum(t, t.record("nan_above_one", std::move(out), {x}, nullptr));
  };
  EXPECT_THROW(gradcheck(f, Tensor({1}, 1.0), 1e-5), OracleError);
  EXPECT_THROW(gradcheck(f, Tensor({1}, 0.0), 0.0), ContractError);
}

}  // namespace
}  // namespace actbench
