#pragma once

#include <string>
#include <vector>

#include "pisorb/dataset.hpp"
#include "pisorb/trainer.hpp"

// Synthetic Sips-family dataset generator (rank-correlated compositions,
// van't Hoff K(T)) and a desk-scale source-model builder. This is the
// validation substrate for cross-task transfer experiments.

namespace pisorb {

struct SynthConfig {
  int n_experiments = 40;
  int points_per_experiment = 10;
  double p_min = 0.5, p_max = 9.0;  // MPa
  std::vector<double> temperatures_K = {293.15, 303.15, 313.15};

  // gas-specific Sips surface: K(T) = K_ref exp(dH_over_R (1/T - 1/T_ref))
  double q_scale = 1.0;
  double K_ref = 0.8;
  double T_ref = 303.15;
  double dH_over_R = 600.0;  // K; positive slope of ln K vs 1/T (exothermic)
  double n_sips = 1.3;

  // capacity spread across experiments, rank-correlated with composition;
  // 0 gives every experiment the same Sips parameters (fitting oracle mode)
  double heterogeneity = 1.0;

  double noise = 0.03;  // multiplicative Gaussian noise level; 0 = noiseless
  std::uint64_t seed = 0;
};

/// True per-experiment Sips parameters, for oracle comparisons.
struct SynthTruth {
  std::vector<double> q_max;  // per experiment
  double K_ref = 0.0;
  double n_sips = 0.0;
};

Dataset synthesize(const SynthConfig& cfg, SynthTruth* truth = nullptr);

/// Write the dataset in the standard CSV layout (plus a "K" schema sidecar
/// next to it when schema_path is nonempty).
void write_dataset_csv(const Dataset& ds, const std::string& csv_path,
                       const std::string& schema_path = "");

/// Source-gas and shifted target-gas presets for the cross-task benchmark.
SynthConfig source_gas_preset(std::uint64_t seed);
SynthConfig target_gas_preset(std::uint64_t seed);

struct SourceModelResult {
  double val_r2 = 0.0;
  double val_loss = 0.0;
  std::string stop_reason;
};

/// Trains a model on the full synthetic source dataset (internal group
/// split), attaches the Fisher diagonal of encoder blocks 2-5, and writes
/// the model file to out_path.
SourceModelResult build_source_model(const Dataset& ds, const NetworkConfig& cfg,
                                     const std::vector<PhaseConfig>& phases,
                                     const TrainOptions& opts, std::uint64_t seed,
                                     const std::string& out_path);

}  // namespace pisorb
