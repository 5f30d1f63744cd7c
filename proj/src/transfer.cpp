#include "pisorb/transfer.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/isotherm.hpp"

namespace pisorb {

using nlohmann::json;

std::string TransferManifest::to_json() const {
  json j;
  j["source_model"] = source_path;
  j["copied"] = copied;
  j["randomly_initialized"] = randomly_initialized;
  j["fisher_attached"] = fisher_attached;
  return j.dump(2);
}

TransferResult transfer_weights(const NetworkConfig& target_cfg,
                                const std::string& source_file) {
  const ModelFile src = load_model(source_file);
  const Network target(target_cfg);
  const int hi = std::min(5, target.n_blocks());
  const auto encoder = target.encoder_block_names(2, hi, true);

  // validate every encoder tensor before touching the target
  ParameterSet fresh = Network::init(target_cfg);
  for (const auto& name : encoder) {
    const auto it = src.params.find(name);
    if (it == src.params.end())
      throw std::runtime_error("transfer_weights: source lacks tensor " + name);
    const Matrix& want = fresh.at(name);
    if (it->second.rows() != want.rows() || it->second.cols() != want.cols())
      throw std::runtime_error(
          "transfer_weights: shape mismatch for tensor " + name + ": source " +
          std::to_string(it->second.rows()) + "x" + std::to_string(it->second.cols()) +
          " vs target " + std::to_string(want.rows()) + "x" +
          std::to_string(want.cols()));
  }

  TransferResult res;
  res.params = std::move(fresh);
  res.manifest.source_path = source_file;
  const std::set<std::string> copied_set(encoder.begin(), encoder.end());
  for (const auto& name : encoder) res.params[name] = src.params.at(name);
  for (const auto& name : target.tensor_names()) {
    if (copied_set.count(name))
      res.manifest.copied.push_back(name);
    else
      res.manifest.randomly_initialized.push_back(name);
  }
  if (!src.fisher.empty()) {
    res.fisher = src.fisher;
    res.manifest.fisher_attached = true;
  }
  return res;
}

std::set<std::string> build_freeze_plan(const Network& net, Phase phase) {
  std::set<std::string> plan;
  if (phase == Phase::Warmup) {
    const int hi = std::min(5, net.n_blocks());
    for (const auto& name : net.encoder_block_names(2, hi, true)) plan.insert(name);
  }
  return plan;
}

HeadInitResult init_physics_head_from_sips(ParameterSet& params,
                                           const FitResult& sips_fit) {
  if (sips_fit.params.kind != IsoKind::Sips)
    throw std::invalid_argument("init_physics_head_from_sips: fit is not a Sips fit");
  if (!sips_fit.converged)
    throw std::invalid_argument("init_physics_head_from_sips: fit did not converge");

  HeadInitResult res;
  Eigen::Vector3d p(sips_fit.params.values[0], sips_fit.params.values[1],
                    sips_fit.params.values[2]);
  const double lo[3] = {0.0, 0.01, 0.5};
  const double hi[3] = {100.0, 10.0, 10.0};
  const char* names[3] = {"q_max", "K", "n"};
  for (int i = 0; i < 3; ++i) {
    const double range = hi[i] - lo[i];
    const double margin = 1e-6 * range;
    if (p[i] <= lo[i] + margin || p[i] >= hi[i] - margin) {
      p[i] = std::clamp(p[i], lo[i] + margin, hi[i] - margin);
      res.nudged = true;
      res.warnings.push_back(std::string(names[i]) +
                             " at transform bound, nudged inward");
    }
  }

  Matrix& w = params.at("head_sips.weight");
  w.setZero();
  const Eigen::Vector3d raw = sips_transform_inverse(p);
  params.at("head_sips.bias") = raw.transpose();
  return res;
}

}  // namespace pisorb
