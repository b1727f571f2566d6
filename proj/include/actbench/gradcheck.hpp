#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "actbench/autograd.hpp"

namespace actbench {

/// Builds a scalar loss on `tape` from the variable node `x`.
using ScalarGraphFn = std::function<NodeId(Tape& tape, NodeId x)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// |a − n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric);

/// Central differences of `f` at `x`, one coordinate at a time.
/// Throws OracleError if `f` is non-finite at any probe.
std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

/// Compares the tape gradient of `f` at `x` against central differences.
GradcheckResult gradcheck(const ScalarGraphFn& f, const Tensor& x, double eps = 1e-5);

/// Worst relative error over paired analytic/numeric vectors.
GradcheckResult compare_gradients(std::vector<double> analytic, std::vector<double> numeric);

}  // namespace actbench
