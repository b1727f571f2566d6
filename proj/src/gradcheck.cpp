#include "actbench/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "actbench/errors.hpp"

namespace actbench {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("numeric_gradient: epsilon must be positive");
  std::vector<double> out(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("numeric_gradient: function is not finite near coordinate " + std::to_string(i));
    }
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

GradcheckResult compare_gradients(std::vector<double> analytic, std::vector<double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("compare_gradients: length mismatch");
  GradcheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    if (!(e <= r.max_rel_error)) {
      r.max_rel_error = std::isnan(e) ? INFINITY : e;
      r.worst_index = i;
    }
  }
  r.analytic = std::move(analytic);
  r.numeric = std::move(numeric);
  return r;
}

GradcheckResult gradcheck(const ScalarGraphFn& f, const Tensor& x, double eps) {
  Tape tape;
  const NodeId xid = tape.variable(x);
  const NodeId loss = f(tape, xid);
  if (!std::isfinite(tape.value(loss).item())) throw OracleError("gradcheck: function is not finite at x");
  tape.backward(loss);
  auto g = tape.grad_or_empty(xid);
  std::vector<double> analytic(x.size(), 0.0);
  std::copy(g.begin(), g.end(), analytic.begin());

  auto value_at = [&f](const Tensor& probe) {
    Tape t(false);
    return t.value(f(t, t.variable(probe))).item();
  };
  return compare_gradients(std::move(analytic), numeric_gradient(value_at, x, eps));
}

}  // namespace actbench
