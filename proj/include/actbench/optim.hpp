#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "actbench/autograd.hpp"

namespace actbench {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Moment buffers for one flat parameter vector.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  AdamConfig config;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig config) : m(n, 0.0), v(n, 0.0), config(config) {}
};

/// One bias-corrected Adam update of `params` in place.
///
/// Returns false and leaves both `params` and `state` untouched when any
/// gradient is non-finite.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Adam over a list of model parameters sharing one step counter.
class Adam {
 public:
  Adam(std::span<Parameter> params, AdamConfig config);

  /// Applies one update using each parameter's accumulated grad. If any
  /// gradient anywhere is non-finite, no parameter changes and false is
  /// returned.
  bool step(std::span<Parameter> params);

  void set_lr(double lr);
  double lr() const { return config_.lr; }
  std::uint64_t steps_taken() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  AdamConfig config_;
  std::vector<AdamState> states_;
};

}  // namespace actbench
