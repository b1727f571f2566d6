#include "actbench/models.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "actbench/errors.hpp"

namespace actbench {

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::kLeNet4: return "lenet4";
    case Arch::kLeNet5: return "lenet5";
    case Arch::kMiniResNet: return "mini_resnet";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  for (auto a : {Arch::kLeNet4, Arch::kLeNet5, Arch::kMiniResNet}) {
    if (arch_name(a) == name) return a;
  }
  throw RegistryError("unknown architecture '" + std::string(name) + "'; available: lenet4 lenet5 mini_resnet");
}

std::array<std::size_t, 3> required_input_shape(Arch arch) {
  if (arch == Arch::kMiniResNet) return {3, 32, 32};
  return {1, 28, 28};
}

/// Creates parameters in a fixed order from one seeded generator.
class ModelBuilder {
 public:
  ModelBuilder(ModelConfig config, std::uint64_t seed) : rng_(seed) {
    const auto need = required_input_shape(config.arch);
    if (config.input_shape == std::array<std::size_t, 3>{0, 0, 0}) config.input_shape = need;
    if (config.input_shape != need) {
      throw ContractError(std::string(arch_name(config.arch)) + " requires input " + std::to_string(need[0]) + "x" +
                          std::to_string(need[1]) + "x" + std::to_string(need[2]));
    }
    if (config.widen_factor < 1) throw ContractError("widen_factor must be at least 1");
    if (config.num_classes < 1) throw ContractError("num_classes must be positive");
    model_.config_ = std::move(config);
  }

  Model::Conv conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t pad, bool bias) {
    Model::Conv c{kaiming(name + ".weight", {out, in, k, k}, in * k * k), std::nullopt, {stride, pad}};
    if (bias) c.bias = zeros(name + ".bias", {out}, ParamRole::kBias);
    return c;
  }

  Model::Linear linear(const std::string& name, std::size_t in, std::size_t out) {
    return {kaiming(name + ".weight", {out, in}, in), zeros(name + ".bias", {out}, ParamRole::kBias)};
  }

  Model::Norm norm(const std::string& name, std::size_t channels) {
    Model::Norm n{filled(name + ".gamma", {channels}, 1.0, ParamRole::kNorm),
                  zeros(name + ".beta", {channels}, ParamRole::kNorm), model_.norm_stats_.size()};
    model_.norm_stats_.emplace_back(channels);
    return n;
  }

  /// `channels` is the size of axis 1 at this site, used for per-channel
  /// parameters.
  Model::Act act(std::size_t channels, std::optional<std::size_t> block, SiteSlot slot) {
    const ActivationSpec& spec = model_.config_.activation;
    Model::SiteBinding b;
    b.meta.spec = spec;
    b.meta.position_index = model_.sites_.size();
    b.meta.block_index = block;
    b.meta.slot = slot;
    const std::size_t k = param_count(spec);
    if (k > 0) {
      const auto init = initial_params(spec);
      std::vector<double> values;
      const std::size_t rows = spec.per_channel ? channels : 1;
      for (std::size_t r = 0; r < rows; ++r) values.insert(values.end(), init.begin(), init.end());
      Shape shape = spec.per_channel ? Shape{channels, k} : Shape{k};
      b.param = model_.params_.size();
      model_.params_.emplace_back("act" + std::to_string(b.meta.position_index), ParamRole::kActivation,
                                  Tensor(std::move(shape), std::move(values)));
    }
    model_.sites_.push_back(std::move(b));
    return Model::Act{model_.sites_.size() - 1};
  }

  void push(Model::Layer layer) { model_.layers_.push_back(std::move(layer)); }

  Model finish() { return std::move(model_); }

 private:
  std::size_t kaiming(const std::string& name, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.storage()) v = dist(rng_);
    model_.params_.emplace_back(name, ParamRole::kWeight, std::move(t));
    return model_.params_.size() - 1;
  }

  std::size_t filled(const std::string& name, Shape shape, double value, ParamRole role) {
    model_.params_.emplace_back(name, role, Tensor(std::move(shape), value));
    return model_.params_.size() - 1;
  }

  std::size_t zeros(const std::string& name, Shape shape, ParamRole role) {
    return filled(name, std::move(shape), 0.0, role);
  }

  Model model_;
  std::mt19937_64 rng_;
};

namespace {

Model build_lenet(Arch arch, const ActivationSpec& activation, std::uint64_t seed) {
  const bool five = arch == Arch::kLeNet5;
  const std::size_t c1 = five ? 6 : 4;
  ModelBuilder b(ModelConfig{.arch = arch, .activation = activation}, seed);
  b.push(b.conv("conv1", 1, c1, 5, 1, 2, true));
  b.push(b.act(c1, std::nullopt, SiteSlot::kPlain));
  b.push(Model::Pool{2});
  b.push(b.conv("conv2", c1, 16, 5, 1, 0, true));
  b.push(b.act(16, std::nullopt, SiteSlot::kPlain));
  b.push(Model::Pool{2});
  b.push(Model::Flatten{});
  b.push(b.linear("fc1", 400, 120));
  b.push(b.act(120, std::nullopt, SiteSlot::kPlain));
  if (five) {
    b.push(b.linear("fc2", 120, 84));
    b.push(b.act(84, std::nullopt, SiteSlot::kPlain));
    b.push(b.linear("fc3", 84, 10));
  } else {
    b.push(b.linear("fc2", 120, 10));
  }
  return b.finish();
}

}  // namespace

Model build_lenet5(const ActivationSpec& activation, std::uint64_t seed) {
  return build_lenet(Arch::kLeNet5, activation, seed);
}

Model build_lenet4(const ActivationSpec& activation, std::uint64_t seed) {
  return build_lenet(Arch::kLeNet4, activation, seed);
}

Model build_mini_resnet(const ActivationSpec& activation, std::size_t widen_factor, std::uint64_t seed) {
  ModelBuilder b(ModelConfig{.arch = Arch::kMiniResNet, .activation = activation, .widen_factor = widen_factor},
                 seed);
  const std::size_t w = widen_factor;
  b.push(b.conv("stem", 3, 16, 3, 1, 1, false));
  std::size_t in = 16;
  std::size_t block = 0;
  for (std::size_t group = 0; group < 3; ++group) {
    const std::size_t out = (16u << group) * w;
    for (std::size_t i = 0; i < 3; ++i, ++block) {
      const std::size_t stride = (group > 0 && i == 0) ? 2 : 1;
      const std::string name = "block" + std::to_string(block);
      Model::Block blk{};
      blk.norm1 = b.norm(name + ".norm1", in);
      blk.act1 = b.act(in, block, SiteSlot::kA1);
      blk.conv1 = b.conv(name + ".conv1", in, out, 3, stride, 1, false);
      blk.norm2 = b.norm(name + ".norm2", out);
      blk.act2 = b.act(out, block, SiteSlot::kA2);
      blk.conv2 = b.conv(name + ".conv2", out, out, 3, 1, 1, false);
      if (stride != 1 || in != out) blk.shortcut = b.conv(name + ".shortcut", in, out, 1, stride, 0, false);
      b.push(std::move(blk));
      in = out;
    }
  }
  b.push(b.norm("head.norm", in));
  b.push(b.act(in, std::nullopt, SiteSlot::kHead));
  b.push(Model::GlobalPool{});
  b.push(b.linear("head.fc", in, 10));
  return b.finish();
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  Model m;
  switch (config.arch) {
    case Arch::kLeNet4: m = build_lenet4(config.activation, seed); break;
    case Arch::kLeNet5: m = build_lenet5(config.activation, seed); break;
    case Arch::kMiniResNet: m = build_mini_resnet(config.activation, config.widen_factor, seed); break;
  }
  if (config.num_classes != 10) throw ContractError("only 10-class heads are supported");
  return m;
}

NodeId Model::forward(Tape& tape, const Tensor& images, bool training) {
  const auto& want = config_.input_shape;
  if (images.rank() != 4 || images.dim(1) != want[0] || images.dim(2) != want[1] || images.dim(3) != want[2]) {
    throw DimensionError(std::string(arch_name(config_.arch)) + " expects input Bx" + std::to_string(want[0]) + "x" +
                         std::to_string(want[1]) + "x" + std::to_string(want[2]) + ", got " +
                         shape_to_string(images.shape()));
  }
  NodeId x = tape.constant(images);
  for (const auto& layer : layers_) x = apply(tape, x, layer, training);
  return x;
}

NodeId Model::apply_conv(Tape& tape, NodeId x, const Conv& c) {
  std::optional<NodeId> bias;
  if (c.bias) bias = tape.parameter(params_[*c.bias]);
  return conv2d(tape, x, tape.parameter(params_[c.weight]), bias, c.options);
}

NodeId Model::apply_norm(Tape& tape, NodeId x, const Norm& n, bool training) {
  return batch_norm(tape, x, tape.parameter(params_[n.gamma]), tape.parameter(params_[n.beta]),
                    norm_stats_[n.stats], training);
}

NodeId Model::apply_act(Tape& tape, NodeId x, const Act& a) {
  const auto& site = sites_[a.site];
  std::optional<NodeId> p;
  if (site.param) p = tape.parameter(params_[*site.param]);
  return activation(tape, x, site.meta.spec, p);
}

NodeId Model::apply(Tape& tape, NodeId x, const Layer& layer, bool training) {
  return std::visit(
      [&](const auto& l) -> NodeId {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv>) {
          return apply_conv(tape, x, l);
        } else if constexpr (std::is_same_v<L, Linear>) {
          return linear(tape, x, tape.parameter(params_[l.weight]), tape.parameter(params_[l.bias]));
        } else if constexpr (std::is_same_v<L, Act>) {
          return apply_act(tape, x, l);
        } else if constexpr (std::is_same_v<L, Pool>) {
          return maxpool2d(tape, x, l.window);
        } else if constexpr (std::is_same_v<L, Flatten>) {
          const Shape& s = tape.value(x).shape();
          return reshape(tape, x, {s[0], tape.value(x).size() / s[0]});
        } else if constexpr (std::is_same_v<L, Norm>) {
          return apply_norm(tape, x, l, training);
        } else if constexpr (std::is_same_v<L, Block>) {
          const NodeId a1 = apply_act(tape, apply_norm(tape, x, l.norm1, training), l.act1);
          const NodeId c1 = apply_conv(tape, a1, l.conv1);
          const NodeId a2 = apply_act(tape, apply_norm(tape, c1, l.norm2, training), l.act2);
          const NodeId c2 = apply_conv(tape, a2, l.conv2);
          const NodeId skip = l.shortcut ? apply_conv(tape, a1, *l.shortcut) : x;
          return add(tape, c2, skip);
        } else {
          return global_avg_pool(tape, x);
        }
      },
      layer);
}

std::vector<ActivationSite> Model::activation_sites() const {
  std::vector<ActivationSite> out;
  out.reserve(sites_.size());
  for (const auto& s : sites_) {
    ActivationSite site = s.meta;
    if (s.param) site.params = params_[*s.param].value.storage();
    out.push_back(std::move(site));
  }
  return out;
}

std::size_t Model::parameter_count() const { return weight_parameter_count() + activation_parameter_count(); }

std::size_t Model::weight_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.role != ParamRole::kActivation) n += p.value.size();
  }
  return n;
}

std::size_t Model::activation_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.role == ParamRole::kActivation) n += p.value.size();
  }
  return n;
}

std::vector<Shape> Model::weight_shapes() const {
  std::vector<Shape> shapes;
  for (const auto& p : params_) {
    if (p.role != ParamRole::kActivation) shapes.push_back(p.value.shape());
  }
  return shapes;
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Model::project_activation_params() {
  for (const auto& s : sites_) {
    if (s.param) project_params(s.meta.spec, params_[*s.param].value.data());
  }
}

std::uint64_t Model::state_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::span<const double> xs) {
    for (double v : xs) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
      }
    }
  };
  for (const auto& p : params_) mix(p.value.data());
  for (const auto& s : norm_stats_) {
    mix(s.mean);
    mix(s.var);
  }
  return h;
}

}  // namespace actbench
