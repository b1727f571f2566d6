#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "actbench/activations.hpp"

namespace actbench {

struct ActivationCheckOptions {
  std::size_t trials = 100;
  std::size_t points_per_trial = 8;
  double epsilon = 1e-5;
  /// Sample points closer than this to a kink are redrawn.
  double kink_margin = 1e-3;
  double x_range = 4.0;
  std::uint64_t seed = 0;
  /// Multiplies every analytic gradient by (1 + fault). Used only to show
  /// that the check catches a broken backward rule.
  double fault = 0.0;
};

struct ActivationCheckResult {
  std::string name;
  std::size_t points = 0;
  double max_error_x = 0.0;
  /// Worst error per learnable parameter, by parameter name.
  std::vector<std::pair<std::string, double>> max_error_params;

  double worst() const;
  bool passed(double tolerance) const { return worst() < tolerance; }
};

/// Gradient check of one activation's input and parameter gradients at
/// random kink-free points with random learnable parameters.
ActivationCheckResult check_activation_gradients(const ActivationSpec& spec, const ActivationCheckOptions& options);

/// Random admissible parameter values for a gradient check.
std::vector<double> sample_params(const ActivationSpec& spec, std::uint64_t seed);

}  // namespace actbench
