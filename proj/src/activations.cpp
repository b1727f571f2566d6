#include "actbench/activations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "actbench/errors.hpp"

namespace actbench {
namespace {

constexpr double kLeak = 0.01;
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kPeluMin = 0.1;
constexpr double kAria2Alpha = 1.5;
constexpr double kAria2Beta = 2.0;
constexpr double kThreshold = 1.0;
constexpr double kGeneralShift = -0.25;
constexpr double kTReLUInit = 0.03;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Each rule gives the value and the derivatives for one element. `p` points
// at the site's learnable scalars; `dp` receives ∂y/∂p for each of them.
struct DPReLURule {
  static constexpr std::size_t kParams = 2;
  static double f(double x, const double* p) { return x < 0.0 ? p[0] * x : p[1] * x; }
  static double d(double x, const double* p, double* dp) {
    if (x < 0.0) {
      dp[0] = x;
      dp[1] = 0.0;
      return p[0];
    }
    dp[0] = 0.0;
    dp[1] = x;
    return p[1];
  }
};

struct DualLineRule {
  static constexpr std::size_t kParams = 3;
  static double f(double x, const double* p) { return (x < 0.0 ? p[0] * x : p[1] * x) + p[2]; }
  static double d(double x, const double* p, double* dp) {
    dp[2] = 1.0;
    return DPReLURule::d(x, p, dp);
  }
};

struct ReLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x > 0.0 ? x : 0.0; }
  static double d(double x, const double*, double*) { return x > 0.0 ? 1.0 : 0.0; }
};

struct LeakyReLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x >= 0.0 ? x : kLeak * x; }
  static double d(double x, const double*, double*) { return x >= 0.0 ? 1.0 : kLeak; }
};

struct PReLURule {
  static constexpr std::size_t kParams = 1;
  static double f(double x, const double* p) { return x >= 0.0 ? x : p[0] * x; }
  static double d(double x, const double* p, double* dp) {
    dp[0] = x >= 0.0 ? 0.0 : x;
    return x >= 0.0 ? 1.0 : p[0];
  }
};

struct GELURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
  static double d(double x, const double*, double*) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
  }
};

struct ELURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x >= 0.0 ? x : std::expm1(x); }
  static double d(double x, const double*, double*) { return x >= 0.0 ? 1.0 : std::exp(x); }
};

struct SELURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return kSeluLambda * (x >= 0.0 ? x : kSeluAlpha * std::expm1(x)); }
  static double d(double x, const double*, double*) {
    return kSeluLambda * (x >= 0.0 ? 1.0 : kSeluAlpha * std::exp(x));
  }
};

// p = (a, b), both kept ≥ 0.1 by project_params.
struct PELURule {
  static constexpr std::size_t kParams = 2;
  static double f(double x, const double* p) { return x >= 0.0 ? (p[0] / p[1]) * x : p[0] * std::expm1(x / p[1]); }
  static double d(double x, const double* p, double* dp) {
    const double a = p[0], b = p[1];
    if (x >= 0.0) {
      dp[0] = x / b;
      dp[1] = -a * x / (b * b);
      return a / b;
    }
    const double e = std::exp(x / b);
    dp[0] = e - 1.0;
    dp[1] = -a * x * e / (b * b);
    return a * e / b;
  }
};

struct SiLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x * sigmoid(x); }
  static double d(double x, const double*, double*) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  }
};

struct DSiLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  }
  static double d(double x, const double*, double*) {
    const double s = sigmoid(x);
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
  }
};

struct SigmoidRule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return sigmoid(x); }
  static double d(double x, const double*, double*) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
  }
};

struct TanhRule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return std::tanh(x); }
  static double d(double x, const double*, double*) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
};

struct SoftplusRule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
  static double d(double x, const double*, double*) { return sigmoid(x); }
};

struct TanhshrinkRule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x - std::tanh(x); }
  static double d(double x, const double*, double*) {
    const double t = std::tanh(x);
    return t * t;
  }
};

struct LogSigmoidRule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }
  static double d(double x, const double*, double*) { return sigmoid(-x); }
};

struct ThresholdedReLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x > kThreshold ? x : 0.0; }
  static double d(double x, const double*, double*) { return x > kThreshold ? 1.0 : 0.0; }
};

struct FReLURule {
  static constexpr std::size_t kParams = 1;
  static double f(double x, const double* p) { return (x > 0.0 ? x : 0.0) + p[0]; }
  static double d(double x, const double*, double* dp) {
    dp[0] = 1.0;
    return x > 0.0 ? 1.0 : 0.0;
  }
};

struct ISRLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return x >= 0.0 ? x : x / std::sqrt(1.0 + x * x); }
  static double d(double x, const double*, double*) {
    if (x >= 0.0) return 1.0;
    const double r = 1.0 / std::sqrt(1.0 + x * x);
    return r * r * r;
  }
};

// (1 + e^{−βx})^{−α} = σ(βx)^α.
struct Aria2Rule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return std::pow(sigmoid(kAria2Beta * x), kAria2Alpha); }
  static double d(double x, const double*, double*) {
    const double s = sigmoid(kAria2Beta * x);
    return kAria2Alpha * kAria2Beta * std::pow(s, kAria2Alpha) * (1.0 - s);
  }
};

struct GeneralReLURule {
  static constexpr std::size_t kParams = 0;
  static double f(double x, const double*) { return (x >= 0.0 ? x : kLeak * x) + kGeneralShift; }
  static double d(double x, const double*, double*) { return x >= 0.0 ? 1.0 : kLeak; }
};

// Approximate TReLU: identity above a learnable threshold t, leaky below it.
struct TReLURule {
  static constexpr std::size_t kParams = 1;
  static double f(double x, const double* p) { return x > p[0] ? x : kLeak * (x - p[0]); }
  static double d(double x, const double* p, double* dp) {
    if (x > p[0]) {
      dp[0] = 0.0;
      return 1.0;
    }
    dp[0] = -kLeak;
    return kLeak;
  }
};

// G(x) + m below zero, β·x + m at and above zero; p = (β, m).
template <class Base>
struct WrappedRule {
  static constexpr std::size_t kParams = 2;
  static double f(double x, const double* p) { return (x < 0.0 ? Base::f(x, nullptr) : p[0] * x) + p[1]; }
  static double d(double x, const double* p, double* dp) {
    dp[1] = 1.0;
    if (x < 0.0) {
      dp[0] = 0.0;
      return Base::d(x, nullptr, nullptr);
    }
    dp[0] = x;
    return p[0];
  }
};

template <class Rule>
struct Tag {
  using type = Rule;
};

// Calls fn(Tag<Rule>{}) for a fixed (parameter-free) kind.
template <class Fn>
decltype(auto) visit_fixed(ActivationKind kind, Fn&& fn) {
  switch (kind) {
    case ActivationKind::kReLU: return fn(Tag<ReLURule>{});
    case ActivationKind::kLeakyReLU: return fn(Tag<LeakyReLURule>{});
    case ActivationKind::kGELU: return fn(Tag<GELURule>{});
    case ActivationKind::kELU: return fn(Tag<ELURule>{});
    case ActivationKind::kSELU: return fn(Tag<SELURule>{});
    case ActivationKind::kSiLU: return fn(Tag<SiLURule>{});
    case ActivationKind::kDSiLU: return fn(Tag<DSiLURule>{});
    case ActivationKind::kSigmoid: return fn(Tag<SigmoidRule>{});
    case ActivationKind::kTanh: return fn(Tag<TanhRule>{});
    case ActivationKind::kSoftplus: return fn(Tag<SoftplusRule>{});
    case ActivationKind::kTanhshrink: return fn(Tag<TanhshrinkRule>{});
    case ActivationKind::kLogSigmoid: return fn(Tag<LogSigmoidRule>{});
    case ActivationKind::kThresholdedReLU: return fn(Tag<ThresholdedReLURule>{});
    case ActivationKind::kISRLU: return fn(Tag<ISRLURule>{});
    case ActivationKind::kAria2: return fn(Tag<Aria2Rule>{});
    case ActivationKind::kGeneralReLU: return fn(Tag<GeneralReLURule>{});
    default: throw RegistryError("not a fixed activation: " + std::string(kind_name(kind)));
  }
}

template <class Fn>
decltype(auto) visit_rule(const ActivationSpec& spec, Fn&& fn) {
  switch (spec.kind) {
    case ActivationKind::kDPReLU: return fn(Tag<DPReLURule>{});
    case ActivationKind::kDualLine: return fn(Tag<DualLineRule>{});
    case ActivationKind::kPReLU: return fn(Tag<PReLURule>{});
    case ActivationKind::kPELU: return fn(Tag<PELURule>{});
    case ActivationKind::kFReLU: return fn(Tag<FReLURule>{});
    case ActivationKind::kTReLU: return fn(Tag<TReLURule>{});
    case ActivationKind::kWrapped:
      if (!spec.base) throw RegistryError("wrapped activation without a base");
      return visit_fixed(*spec.base, [&](auto tag) -> decltype(auto) {
        using Base = typename decltype(tag)::type;
        return fn(Tag<WrappedRule<Base>>{});
      });
    default: return visit_fixed(spec.kind, fn);
  }
}

struct KindEntry {
  ActivationKind kind;
  std::string_view name;
};

constexpr std::array<KindEntry, 22> kKinds{{
    {ActivationKind::kDPReLU, "dp_relu"},
    {ActivationKind::kDualLine, "dual_line"},
    {ActivationKind::kReLU, "relu"},
    {ActivationKind::kLeakyReLU, "leaky_relu"},
    {ActivationKind::kPReLU, "prelu"},
    {ActivationKind::kGELU, "gelu"},
    {ActivationKind::kELU, "elu"},
    {ActivationKind::kSELU, "selu"},
    {ActivationKind::kPELU, "pelu"},
    {ActivationKind::kSiLU, "silu"},
    {ActivationKind::kDSiLU, "dsilu"},
    {ActivationKind::kSigmoid, "sigmoid"},
    {ActivationKind::kTanh, "tanh"},
    {ActivationKind::kSoftplus, "softplus"},
    {ActivationKind::kTanhshrink, "tanhshrink"},
    {ActivationKind::kLogSigmoid, "logsigmoid"},
    {ActivationKind::kThresholdedReLU, "thresholded_relu"},
    {ActivationKind::kFReLU, "frelu"},
    {ActivationKind::kISRLU, "isrlu"},
    {ActivationKind::kAria2, "aria2"},
    {ActivationKind::kGeneralReLU, "general_relu"},
    {ActivationKind::kTReLU, "trelu"},
}};

constexpr std::string_view kWrappedPrefix = "wrapped_";

bool is_fixed_kind(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kDPReLU:
    case ActivationKind::kDualLine:
    case ActivationKind::kWrapped:
    case ActivationKind::kPReLU:
    case ActivationKind::kPELU:
    case ActivationKind::kFReLU:
    case ActivationKind::kTReLU:
      return false;
    default:
      return true;
  }
}

void require_params(const ActivationSpec& spec, std::size_t got) {
  const std::size_t want = param_count(spec);
  if (got != want) {
    throw ContractError(spec.name() + " expects " + std::to_string(want) + " parameters, got " + std::to_string(got));
  }
}

}  // namespace

std::string_view kind_name(ActivationKind kind) {
  if (kind == ActivationKind::kWrapped) return "wrapped";
  for (const auto& e : kKinds) {
    if (e.kind == kind) return e.name;
  }
  return "unknown";
}

std::string ActivationSpec::name() const {
  if (kind == ActivationKind::kWrapped && base) return std::string(kWrappedPrefix) + std::string(kind_name(*base));
  return std::string(kind_name(kind));
}

std::vector<std::string> registry_names(bool include_wrapped) {
  std::vector<std::string> names;
  for (const auto& e : kKinds) names.emplace_back(e.name);
  if (include_wrapped) {
    for (const auto& e : kKinds) {
      if (is_fixed_kind(e.kind)) names.push_back(std::string(kWrappedPrefix) + std::string(e.name));
    }
  }
  return names;
}

ActivationSpec make_activation(std::string_view name) {
  for (const auto& e : kKinds) {
    if (e.name == name) return ActivationSpec{.kind = e.kind};
  }
  if (name.starts_with(kWrappedPrefix)) {
    const auto rest = name.substr(kWrappedPrefix.size());
    for (const auto& e : kKinds) {
      if (e.name == rest && is_fixed_kind(e.kind)) {
        const ActivationSpec defaults;
        return wrap_activation(ActivationSpec{.kind = e.kind}, defaults.init_beta, defaults.init_mean_shift);
      }
    }
  }
  std::string msg = "unknown activation '" + std::string(name) + "'; available:";
  for (const auto& n : registry_names()) msg += " " + n;
  throw RegistryError(msg);
}

ActivationSpec wrap_activation(const ActivationSpec& base, double beta, double mean_shift) {
  if (!is_fixed_kind(base.kind)) {
    throw RegistryError("cannot wrap '" + base.name() + "': only fixed activations without learnable parameters");
  }
  ActivationSpec spec;
  spec.kind = ActivationKind::kWrapped;
  spec.base = base.kind;
  spec.init_beta = beta;
  spec.init_mean_shift = mean_shift;
  spec.per_channel = base.per_channel;
  return spec;
}

bool has_learnables(const ActivationSpec& spec) { return param_count(spec) > 0; }

std::size_t param_count(const ActivationSpec& spec) {
  return visit_rule(spec, [](auto tag) { return decltype(tag)::type::kParams; });
}

std::vector<std::string> param_names(const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::kDPReLU: return {"alpha", "beta"};
    case ActivationKind::kDualLine: return {"alpha", "beta", "mean_shift"};
    case ActivationKind::kWrapped: return {"beta", "mean_shift"};
    case ActivationKind::kPReLU: return {"alpha"};
    case ActivationKind::kPELU: return {"a", "b"};
    case ActivationKind::kFReLU: return {"bias"};
    case ActivationKind::kTReLU: return {"threshold"};
    default: return {};
  }
}

std::vector<double> initial_params(const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::kDPReLU: return {spec.init_alpha, spec.init_beta};
    case ActivationKind::kDualLine: return {spec.init_alpha, spec.init_beta, spec.init_mean_shift};
    case ActivationKind::kWrapped: return {spec.init_beta, spec.init_mean_shift};
    case ActivationKind::kPReLU: return {spec.init_alpha};
    case ActivationKind::kPELU: return {1.0, 1.0};
    case ActivationKind::kFReLU: return {0.0};
    case ActivationKind::kTReLU: return {kTReLUInit};
    default: return {};
  }
}

void project_params(const ActivationSpec& spec, std::span<double> params) {
  if (spec.kind != ActivationKind::kPELU) return;
  for (auto& p : params) p = std::max(p, kPeluMin);
}

std::vector<double> kink_points(const ActivationSpec& spec, std::span<const double> params) {
  switch (spec.kind) {
    case ActivationKind::kThresholdedReLU: return {kThreshold};
    case ActivationKind::kTReLU: return {params.empty() ? kTReLUInit : params[0]};
    case ActivationKind::kGELU:
    case ActivationKind::kSiLU:
    case ActivationKind::kDSiLU:
    case ActivationKind::kSigmoid:
    case ActivationKind::kTanh:
    case ActivationKind::kSoftplus:
    case ActivationKind::kTanhshrink:
    case ActivationKind::kLogSigmoid:
    case ActivationKind::kAria2:
      return {};
    case ActivationKind::kWrapped: {
      std::vector<double> k{0.0};
      if (spec.base) {
        for (double p : kink_points(ActivationSpec{.kind = *spec.base}, {})) k.push_back(p);
      }
      return k;
    }
    default: return {0.0};
  }
}

double activation_value(const ActivationSpec& spec, double x, std::span<const double> params) {
  require_params(spec, params.size());
  return visit_rule(spec, [&](auto tag) { return decltype(tag)::type::f(x, params.data()); });
}

ScalarDerivative activation_derivative(const ActivationSpec& spec, double x, std::span<const double> params) {
  require_params(spec, params.size());
  return visit_rule(spec, [&](auto tag) {
    using Rule = typename decltype(tag)::type;
    ScalarDerivative out;
    std::array<double, 3> dp{};
    out.value = Rule::f(x, params.data());
    out.dx = Rule::d(x, params.data(), dp.data());
    out.dparams.assign(dp.begin(), dp.begin() + Rule::kParams);
    return out;
  });
}

Tensor eval_activation(const ActivationSpec& spec, const Tensor& x, std::span<const double> params) {
  require_params(spec, params.size());
  Tensor y(x.shape());
  visit_rule(spec, [&](auto tag) {
    using Rule = typename decltype(tag)::type;
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = Rule::f(x[i], params.data());
  });
  return y;
}

Tensor dp_relu_forward(const Tensor& x, double alpha, double beta) {
  const std::array<double, 2> p{alpha, beta};
  return eval_activation(ActivationSpec{.kind = ActivationKind::kDPReLU}, x, p);
}

Tensor dual_line_forward(const Tensor& x, double alpha, double beta, double mean_shift) {
  const std::array<double, 3> p{alpha, beta, mean_shift};
  return eval_activation(ActivationSpec{.kind = ActivationKind::kDualLine}, x, p);
}

DPReLUGrads dp_relu_backward(const Tensor& x, double alpha, double beta, const Tensor& upstream) {
  if (x.shape() != upstream.shape()) throw DimensionError("dp_relu_backward: upstream shape differs from input");
  DPReLUGrads g{Tensor(x.shape()), 0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) {
      g.dx[i] = upstream[i] * alpha;
      g.dalpha += upstream[i] * x[i];
    } else {
      g.dx[i] = upstream[i] * beta;
      g.dbeta += upstream[i] * x[i];
    }
  }
  return g;
}

DualLineGrads dual_line_backward(const Tensor& x, double alpha, double beta, double mean_shift,
                                 const Tensor& upstream) {
  (void)mean_shift;  // enters additively, so no gradient depends on it
  auto base = dp_relu_backward(x, alpha, beta, upstream);
  double dm = 0.0;
  for (double u : upstream.data()) dm += u;
  return DualLineGrads{std::move(base.dx), base.dalpha, base.dbeta, dm};
}

NodeId activation(Tape& tape, NodeId x, const ActivationSpec& spec, std::optional<NodeId> params) {
  const std::size_t k = param_count(spec);
  const Tensor& vx = tape.value(x);
  if (k > 0 && !params) throw ContractError(spec.name() + " needs a parameter node");
  if (k == 0 && params) throw ContractError(spec.name() + " takes no parameters");

  // Elements are visited in runs that share one parameter row.
  std::size_t groups = 1;
  std::size_t run = vx.size();
  if (k > 0) {
    const Tensor& vp = tape.value(*params);
    if (spec.per_channel) {
      if (vx.rank() < 2 || vp.size() != vx.dim(1) * k) {
        throw DimensionError("per-channel " + spec.name() + ": parameters " + shape_to_string(vp.shape()) +
                             " do not match input " + shape_to_string(vx.shape()));
      }
      groups = vx.dim(1);
      run = shape_size(Shape(vx.shape().begin() + 2, vx.shape().end()));
    } else if (vp.size() != k) {
      throw DimensionError(spec.name() + ": expected " + std::to_string(k) + " parameters, got " +
                           shape_to_string(vp.shape()));
    }
  }
  const std::size_t outer = vx.size() / (groups * run);

  Tensor y(vx.shape());
  visit_rule(spec, [&](auto tag) {
    using Rule = typename decltype(tag)::type;
    const double* p = k ? tape.value(*params).data().data() : nullptr;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t base = (o * groups + g) * run;
        const double* pg = p ? p + g * k : nullptr;
        for (std::size_t i = 0; i < run; ++i) y[base + i] = Rule::f(vx[base + i], pg);
      }
    }
  });

  std::vector<NodeId> inputs{x};
  if (params) inputs.push_back(*params);
  return tape.record(
      "activation:" + spec.name(), std::move(y), std::move(inputs),
      [x, params, spec, k, groups, run, outer](Tape& t, NodeId self) {
        visit_rule(spec, [&](auto tag) {
          using Rule = typename decltype(tag)::type;
          const Tensor& vx = t.value(x);
          auto gy = t.grad(self);
          const bool want_x = t.requires_grad(x);
          const bool want_p = params && t.requires_grad(*params);
          std::span<double> gx = want_x ? t.grad(x) : std::span<double>{};
          std::span<double> gp = want_p ? t.grad(*params) : std::span<double>{};
          const double* p = k ? t.value(*params).data().data() : nullptr;
          std::array<double, 3> dp{};
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t g = 0; g < groups; ++g) {
              const std::size_t base = (o * groups + g) * run;
              const double* pg = p ? p + g * k : nullptr;
              std::array<double, 3> acc{};
              for (std::size_t i = 0; i < run; ++i) {
                const double dx = Rule::d(vx[base + i], pg, dp.data());
                if (want_x) gx[base + i] += gy[base + i] * dx;
                for (std::size_t j = 0; j < Rule::kParams; ++j) acc[j] += gy[base + i] * dp[j];
              }
              if (want_p) {
                for (std::size_t j = 0; j < Rule::kParams; ++j) gp[g * k + j] += acc[j];
              }
            }
          }
        });
      });
}

std::string_view slot_name(SiteSlot slot) {
  switch (slot) {
    case SiteSlot::kStem: return "stem";
    case SiteSlot::kA1: return "A-1";
    case SiteSlot::kA2: return "A-2";
    case SiteSlot::kHead: return "head";
    case SiteSlot::kPlain: return "plain";
  }
  return "plain";
}

SiteSlot parse_slot(std::string_view name) {
  for (auto s : {SiteSlot::kStem, SiteSlot::kA1, SiteSlot::kA2, SiteSlot::kHead, SiteSlot::kPlain}) {
    if (slot_name(s) == name) return s;
  }
  throw FormatError("unknown activation slot '" + std::string(name) + "'");
}

ResponseEnvelope response_envelope(std::span<const ActivationSite> sites, std::span<const double> x_grid) {
  if (sites.empty()) throw ContractError("response_envelope: no activation sites");
  const std::string kind = sites.front().spec.name();
  for (const auto& s : sites) {
    if (s.spec.name() != kind) {
      throw ContractError("response_envelope: sites mix '" + kind + "' and '" + s.spec.name() + "'");
    }
  }
  if (!std::is_sorted(x_grid.begin(), x_grid.end())) throw ContractError("response_envelope: x grid not sorted");
  ResponseEnvelope env;
  env.x.assign(x_grid.begin(), x_grid.end());
  env.lower.assign(x_grid.size(), INFINITY);
  env.upper.assign(x_grid.size(), -INFINITY);
  for (const auto& s : sites) {
    const std::size_t k = param_count(s.spec);
    // Per-channel sites contribute one response curve per channel.
    const std::size_t rows = k ? s.params.size() / k : 1;
    for (std::size_t r = 0; r < rows; ++r) {
      std::span<const double> p(s.params.data() + r * k, k);
      for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const double y = activation_value(s.spec, x_grid[i], p);
        env.lower[i] = std::min(env.lower[i], y);
        env.upper[i] = std::max(env.upper[i], y);
      }
    }
  }
  return env;
}

}  // namespace actbench
