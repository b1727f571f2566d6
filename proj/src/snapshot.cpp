#include "actbench/snapshot.hpp"

#include "actbench/errors.hpp"

namespace actbench {

ParamSnapshot snapshot_site(const ActivationSite& site) {
  ParamSnapshot s;
  s.activation = site.spec.name();
  s.position_index = site.position_index;
  s.block_index = site.block_index;
  s.slot = site.slot;
  s.names = param_names(site.spec);
  s.values = site.params;
  const std::size_t k = s.names.size();
  if (k == 0) return s;
  if (s.values.size() % k != 0) {
    throw ContractError("site " + std::to_string(site.position_index) + " holds " + std::to_string(s.values.size()) +
                        " values for " + std::to_string(k) + " parameters");
  }
  const std::size_t rows = s.values.size() / k;
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += s.values[r * k + j];
    mean /= static_cast<double>(rows);
    if (s.names[j] == "alpha") s.alpha = mean;
    if (s.names[j] == "beta") s.beta = mean;
    if (s.names[j] == "mean_shift") s.mean_shift = mean;
  }
  return s;
}

std::vector<ParamSnapshot> snapshot_model(const Model& model) {
  std::vector<ParamSnapshot> out;
  for (const auto& site : model.activation_sites()) out.push_back(snapshot_site(site));
  return out;
}

}  // namespace actbench
