#pragma once

#include <set>
#include <string>
#include <vector>

#include "pisorb/loss.hpp"
#include "pisorb/nn.hpp"

// Selective weight transfer from a serialized source model, phase freeze
// plans, and physics-head initialization from a classical Sips fit.

namespace pisorb {

struct FitResult;  // isotherm.hpp

struct TransferManifest {
  std::string source_path;
  std::vector<std::string> copied;
  std::vector<std::string> randomly_initialized;
  bool fisher_attached = false;

  std::string to_json() const;
};

struct TransferResult {
  ParameterSet params;
  TransferManifest manifest;
  FisherDiag fisher;  // empty when the source carries none
};

/// Copies encoder blocks 2-5 (including batchnorm running statistics and
/// residual projections) from the source model; projection layer and all
/// heads are freshly initialized. Shape validation happens before any copy,
/// so failures leave no partial state.
TransferResult transfer_weights(const NetworkConfig& target_cfg,
                                const std::string& source_file);

/// Tensor names whose gradients (and running-statistic updates) are
/// suppressed. Warmup freezes encoder blocks 2-5; later phases freeze
/// nothing.
std::set<std::string> build_freeze_plan(const Network& net, Phase phase);

struct HeadInitResult {
  bool nudged = false;  // a fit parameter sat on a bound and was moved inward
  std::vector<std::string> warnings;
};

/// Zeroes the physics-head weights and sets its biases so the head emits
/// exactly the fitted Sips triple at zero input activation. Parameters on a
/// transform bound are nudged inward by a relative 1e-6.
HeadInitResult init_physics_head_from_sips(ParameterSet& params,
                                           const FitResult& sips_fit);

}  // namespace pisorb
