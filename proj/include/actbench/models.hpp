#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "actbench/activations.hpp"
#include "actbench/autograd.hpp"
#include "actbench/ops.hpp"

namespace actbench {

enum class Arch { kLeNet4, kLeNet5, kMiniResNet };

std::string_view arch_name(Arch arch);
/// "lenet4", "lenet5" or "mini_resnet".
Arch parse_arch(std::string_view name);

struct ModelConfig {
  Arch arch = Arch::kLeNet5;
  ActivationSpec activation;
  std::size_t num_classes = 10;
  std::size_t widen_factor = 1;
  /// (channels, height, width); filled from the architecture when left 0.
  std::array<std::size_t, 3> input_shape{0, 0, 0};
};

/// Input geometry an architecture expects: 1×28×28 for the LeNets,
/// 3×32×32 for the residual net.
std::array<std::size_t, 3> required_input_shape(Arch arch);

/// A network as an ordered layer list over a flat parameter store.
///
/// Models are values: copying one copies every parameter and running
/// statistic, so a copy can be trained without touching the original.
class Model {
 public:
  struct Conv {
    std::size_t weight;
    std::optional<std::size_t> bias;
    Conv2dOptions options;
  };
  struct Linear {
    std::size_t weight;
    std::size_t bias;
  };
  struct Act {
    std::size_t site;
  };
  struct Pool {
    std::size_t window;
  };
  struct Flatten {};
  struct Norm {
    std::size_t gamma;
    std::size_t beta;
    std::size_t stats;
  };
  /// Pre-activation residual block: norm → act → conv → norm → act → conv,
  /// plus an identity or projected shortcut.
  struct Block {
    Norm norm1;
    Act act1;
    Conv conv1;
    Norm norm2;
    Act act2;
    Conv conv2;
    std::optional<Conv> shortcut;
  };
  struct GlobalPool {};
  using Layer = std::variant<Conv, Linear, Act, Pool, Flatten, Norm, Block, GlobalPool>;

  /// Logits [B×num_classes] for images [B×C×H×W]. Batch norm uses batch
  /// statistics (and updates its running averages) only when `training`.
  NodeId forward(Tape& tape, const Tensor& images, bool training);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  /// Sites in network order with their current parameter values.
  std::vector<ActivationSite> activation_sites() const;

  std::size_t parameter_count() const;
  /// Scalars that are not activation parameters.
  std::size_t weight_parameter_count() const;
  std::size_t activation_parameter_count() const;
  /// Shapes of all non-activation parameters, in creation order.
  std::vector<Shape> weight_shapes() const;

  void zero_grad();
  /// Re-applies activation parameter constraints after an optimizer step.
  void project_activation_params();

  /// FNV-1a over every parameter value and running statistic.
  std::uint64_t state_hash() const;

 private:
  friend class ModelBuilder;

  struct SiteBinding {
    ActivationSite meta;
    std::optional<std::size_t> param;
  };

  NodeId apply(Tape& tape, NodeId x, const Layer& layer, bool training);
  NodeId apply_conv(Tape& tape, NodeId x, const Conv& c);
  NodeId apply_norm(Tape& tape, NodeId x, const Norm& n, bool training);
  NodeId apply_act(Tape& tape, NodeId x, const Act& a);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<BatchNormStats> norm_stats_;
  std::vector<SiteBinding> sites_;
  std::vector<Layer> layers_;
};

/// conv(1→6,5×5) → act → pool → conv(6→16,5×5) → act → pool →
/// linear 400→120 → act → linear 120→84 → act → linear 84→10.
Model build_lenet5(const ActivationSpec& activation, std::uint64_t seed);

/// conv(1→4,5×5) → act → pool → conv(4→16,5×5) → act → pool →
/// linear 400→120 → act → linear 120→10.
Model build_lenet4(const ActivationSpec& activation, std::uint64_t seed);

/// Nine pre-activation residual blocks in three groups of widths
/// 16w/32w/64w, two activation sites per block plus one head site.
Model build_mini_resnet(const ActivationSpec& activation, std::size_t widen_factor, std::uint64_t seed);

Model build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace actbench
