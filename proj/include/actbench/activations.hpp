#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "actbench/autograd.hpp"

namespace actbench {

enum class ActivationKind {
  kDPReLU,
  kDualLine,
  kWrapped,
  kReLU,
  kLeakyReLU,
  kPReLU,
  kGELU,
  kELU,
  kSELU,
  kPELU,
  kSiLU,
  kDSiLU,
  kSigmoid,
  kTanh,
  kSoftplus,
  kTanhshrink,
  kLogSigmoid,
  kThresholdedReLU,
  kFReLU,
  kISRLU,
  kAria2,
  kGeneralReLU,
  kTReLU,
};

/// Which activation to use and where its learnable parameters start.
///
/// `init_alpha`, `init_beta` and `init_mean_shift` seed the slope and shift
/// parameters of DP ReLU, Dual Line, PReLU and wrapped activations. Other
/// learnable kinds (PELU, FReLU, TReLU) have fixed initial values.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::kReLU;
  /// Base function G for kWrapped.
  std::optional<ActivationKind> base;
  double init_alpha = 0.01;
  double init_beta = 1.0;
  double init_mean_shift = -0.22;
  bool per_channel = false;

  /// Stable snake_case registry name, e.g. "dual_line" or "wrapped_elu".
  std::string name() const;

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

std::string_view kind_name(ActivationKind kind);

/// All registry names. Wrapped variants are listed when `include_wrapped`.
std::vector<std::string> registry_names(bool include_wrapped = true);

/// Looks up a registry name. Throws RegistryError listing the valid names.
ActivationSpec make_activation(std::string_view name);

/// G(x)+m for x<0 and β·x+m for x≥0 with β and m learnable. `base` must be a
/// fixed activation with no learnable parameters.
ActivationSpec wrap_activation(const ActivationSpec& base, double beta, double mean_shift);

bool has_learnables(const ActivationSpec& spec);
std::size_t param_count(const ActivationSpec& spec);
/// Names of the learnable scalars, in storage order ("alpha", "beta", ...).
std::vector<std::string> param_names(const ActivationSpec& spec);
std::vector<double> initial_params(const ActivationSpec& spec);

/// Keeps parameters inside their admissible set after an optimizer step
/// (PELU's a and b are clamped to at least 0.1).
void project_params(const ActivationSpec& spec, std::span<double> params);

/// Points where the activation is not differentiable for these parameters.
std::vector<double> kink_points(const ActivationSpec& spec, std::span<const double> params);

struct ScalarDerivative {
  double value = 0.0;
  double dx = 0.0;
  std::vector<double> dparams;
};

double activation_value(const ActivationSpec& spec, double x, std::span<const double> params);
ScalarDerivative activation_derivative(const ActivationSpec& spec, double x, std::span<const double> params);

/// Elementwise forward of any registry activation.
Tensor eval_activation(const ActivationSpec& spec, const Tensor& x, std::span<const double> params);

// Direct forms of the two proposed activations.
Tensor dp_relu_forward(const Tensor& x, double alpha, double beta);
Tensor dual_line_forward(const Tensor& x, double alpha, double beta, double mean_shift);

struct DPReLUGrads {
  Tensor dx;
  double dalpha = 0.0;
  double dbeta = 0.0;
};

struct DualLineGrads {
  Tensor dx;
  double dalpha = 0.0;
  double dbeta = 0.0;
  double dmean_shift = 0.0;
};

DPReLUGrads dp_relu_backward(const Tensor& x, double alpha, double beta, const Tensor& upstream);
DualLineGrads dual_line_backward(const Tensor& x, double alpha, double beta, double mean_shift,
                                 const Tensor& upstream);

/// Records the activation on a tape. `params` holds the learnable scalars:
/// shape [k] when shared by the whole layer, or [C×k] with per_channel on
/// an input whose axis 1 has C entries. Pass nullopt for fixed activations.
NodeId activation(Tape& tape, NodeId x, const ActivationSpec& spec, std::optional<NodeId> params);

enum class SiteSlot { kStem, kA1, kA2, kHead, kPlain };

std::string_view slot_name(SiteSlot slot);
SiteSlot parse_slot(std::string_view name);

/// One place in a network where the activation is applied, with the
/// current value of its learnable parameters.
struct ActivationSite {
  ActivationSpec spec;
  std::size_t position_index = 0;
  std::optional<std::size_t> block_index;
  SiteSlot slot = SiteSlot::kPlain;
  std::vector<double> params;
};

struct ResponseEnvelope {
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Pointwise min and max of the activation response over all sites.
ResponseEnvelope response_envelope(std::span<const ActivationSite> sites, std::span<const double> x_grid);

}  // namespace actbench
