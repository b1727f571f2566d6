#include "actbench/optim.hpp"

#include <algorithm>
#include <cmath>

#include "actbench/errors.hpp"

namespace actbench {
namespace {

bool finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double g) { return std::isfinite(g); });
}

void apply(std::span<double> params, std::span<const double> grads, AdamState& s) {
  const auto& c = s.config;
  s.step += 1;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * grads[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
  }
  if (!finite(grads)) return false;
  apply(params, grads, state);
  return true;
}

Adam::Adam(std::span<Parameter> params, AdamConfig config) : config_(config) {
  states_.reserve(params.size());
  for (const auto& p : params) states_.emplace_back(p.value.size(), config);
}

bool Adam::step(std::span<Parameter> params) {
  if (params.size() != states_.size()) throw ContractError("Adam::step: parameter list changed size");
  for (const auto& p : params) {
    if (!finite(p.grad.data())) return false;
  }
  for (std::size_t i = 0; i < params.size(); ++i) apply(params[i].value.data(), params[i].grad.data(), states_[i]);
  return true;
}

void Adam::set_lr(double lr) {
  config_.lr = lr;
  for (auto& s : states_) s.config.lr = lr;
}

}  // namespace actbench
