#include "actbench/activation_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "actbench/gradcheck.hpp"
#include "actbench/ops.hpp"

namespace actbench {
namespace {

std::vector<double> draw_params(const ActivationSpec& spec, std::mt19937_64& rng) {
  auto u = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  switch (spec.kind) {
    case ActivationKind::kDPReLU: return {u(-0.5, 0.5), u(0.2, 2.5)};
    case ActivationKind::kDualLine: return {u(-0.5, 0.5), u(0.2, 2.5), u(-1.0, 1.0)};
    case ActivationKind::kWrapped: return {u(0.2, 2.5), u(-1.0, 1.0)};
    case ActivationKind::kPReLU: return {u(-0.5, 0.5)};
    case ActivationKind::kPELU: return {u(0.5, 2.0), u(0.5, 2.0)};
    case ActivationKind::kFReLU: return {u(-1.0, 1.0)};
    case ActivationKind::kTReLU: return {u(-0.5, 0.5)};
    default: return {};
  }
}

double weighted_total(std::span<const double> y, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

/// Points where the input derivative has a double zero. The central
/// difference there is dominated by its truncation term, so they are
/// avoided like kinks.
std::vector<double> flat_points(const ActivationSpec& spec) {
  if (spec.kind == ActivationKind::kTanhshrink) return {0.0};
  return {};
}

}  // namespace

double ActivationCheckResult::worst() const {
  double w = max_error_x;
  for (const auto& [name, e] : max_error_params) w = std::max(w, e);
  return w;
}

std::vector<double> sample_params(const ActivationSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw_params(spec, rng);
}

ActivationCheckResult check_activation_gradients(const ActivationSpec& spec, const ActivationCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> xdist(-options.x_range, options.x_range);
  std::uniform_real_distribution<double> wdist(0.5, 1.5);

  ActivationCheckResult result;
  result.name = spec.name();
  const auto names = param_names(spec);
  for (const auto& n : names) result.max_error_params.emplace_back(n, 0.0);
  const std::size_t k = param_count(spec);
  const double scale_analytic = 1.0 + options.fault;

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const std::vector<double> params = draw_params(spec, rng);
    auto kinks = kink_points(spec, params);
    for (double f : flat_points(spec)) kinks.push_back(f);
    Tensor x({options.points_per_trial});
    for (auto& v : x.storage()) {
      do {
        v = xdist(rng);
      } while (std::any_of(kinks.begin(), kinks.end(),
                           [&](double kp) { return std::abs(v - kp) < options.kink_margin; }));
    }
    Tensor w({options.points_per_trial});
    for (auto& v : w.storage()) v = wdist(rng) * (rng() % 2 ? 1.0 : -1.0);
    const Tensor ptensor({std::max<std::size_t>(k, 1)}, k ? params : std::vector<double>{0.0});

    // Analytic gradients from one tape pass.
    Tape tape;
    const NodeId xid = tape.variable(x);
    std::optional<NodeId> pid;
    if (k) pid = tape.variable(ptensor);
    const NodeId y = activation(tape, xid, spec, pid);
    tape.backward(sum(tape, mul(tape, y, tape.constant(w))));

    auto read = [&](NodeId id, std::size_t n) {
      std::vector<double> g(n, 0.0);
      auto src = tape.grad_or_empty(id);
      std::copy(src.begin(), src.end(), g.begin());
      for (auto& v : g) v *= scale_analytic;
      return g;
    };

    auto f_of_x = [&](const Tensor& probe) {
      return weighted_total(eval_activation(spec, probe, params).data(), w.data());
    };
    auto rx = compare_gradients(read(xid, x.size()), numeric_gradient(f_of_x, x, options.epsilon));
    result.max_error_x = std::max(result.max_error_x, rx.max_rel_error);

    if (k) {
      auto f_of_p = [&](const Tensor& probe) {
        return weighted_total(eval_activation(spec, x, probe.data()).data(), w.data());
      };
      auto rp = compare_gradients(read(*pid, k), numeric_gradient(f_of_p, ptensor, options.epsilon));
      for (std::size_t j = 0; j < k; ++j) {
        const double e = relative_error(rp.analytic[j], rp.numeric[j]);
        result.max_error_params[j].second = std::max(result.max_error_params[j].second, e);
      }
    }
    result.points += x.size();
  }
  return result;
}

}  // namespace actbench
