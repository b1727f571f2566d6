#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "actbench/activations.hpp"
#include "actbench/models.hpp"

namespace actbench {

/// Learned activation parameters at one site after training.
///
/// `alpha`, `beta` and `mean_shift` are set when the activation has that
/// parameter; with per-channel parameters they hold the channel mean.
/// `names`/`values` keep the full parameter vector in storage order
/// (channel-major when per-channel).
struct ParamSnapshot {
  std::string activation;
  std::size_t position_index = 0;
  std::optional<std::size_t> block_index;
  SiteSlot slot = SiteSlot::kPlain;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> mean_shift;
  std::vector<std::string> names;
  std::vector<double> values;

  friend bool operator==(const ParamSnapshot&, const ParamSnapshot&) = default;
};

ParamSnapshot snapshot_site(const ActivationSite& site);
std::vector<ParamSnapshot> snapshot_model(const Model& model);

}  // namespace actbench
