#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pisorb/dataset.hpp"
#include "pisorb/loss.hpp"
#include "pisorb/nn.hpp"

// Three-phase training curriculum: AdamW with decoupled weight decay,
// gradient clipping, plateau / cosine-warm-restart schedules, early
// stopping, checkpointing, and the reduced group-aware CV grid search.

namespace pisorb {

enum class SchedulerKind { Plateau, CosineRestarts };

struct PhaseConfig {
  Phase phase = Phase::Warmup;
  std::string name = "warmup";
  double base_lr = 1e-3;
  int max_epochs = 500;
  double lambda_reg = 0.0;
  double clip_norm = 0.5;
  SchedulerKind scheduler = SchedulerKind::Plateau;
  int cosine_period = 60;
  double lambda_p_override = -1.0;  // < 0: use the phase schedule

  /// warmup (1e-3, 500, 0, plateau, clip 0.5), finetune (5e-4, 400, 100,
  /// plateau, clip 0.5), full (1e-4, 300, 10, cosine restarts 60, clip 1.0).
  static std::vector<PhaseConfig> default_curriculum();

  /// Same structure with reduced epoch budgets for desk-scale runs.
  static std::vector<PhaseConfig> desk_curriculum(int warmup, int finetune, int full);
};

struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  long step = 0;
  int skipped_steps = 0;
  std::map<std::string, Matrix> m, v;
};

/// Bias-corrected AdamW update with decoupled decay; frozen tensors are
/// untouched. Returns false (step skipped, counted) on non-finite gradients.
bool adamw_step(ParameterSet& params, const ParameterSet& grads, AdamWState& state,
                double lr, const std::set<std::string>* frozen = nullptr);

/// Scales gradients in place when the global L2 norm exceeds max_norm;
/// returns the pre-clip norm.
double clip_grad_norm(ParameterSet& grads, double max_norm);

struct PlateauScheduler {
  double lr = 1e-3;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int patience = 25;
  double factor = 0.5;
  double floor = 1e-6;

  void observe(double val_loss);
};

/// lr(e) = eta_min + (base - eta_min) (1 + cos(pi (e mod period) / period)) / 2,
/// eta_min = 0.01 * base.
double cosine_restart_lr(double base_lr, int epoch_in_phase, int period);

struct TrainData {
  Matrix X;        // scaled features
  Matrix X_probe;  // scaled features at pressure + probe delta
  Vector y;        // log1p adsorption
  Vector P;        // MPa, original units
  Vector T;        // K
  Eigen::Index size() const { return y.size(); }
};

/// Builds scaled training tensors (including the monotonicity probe rows)
/// for a subset of dataset rows.
TrainData make_train_data(const Dataset& ds, const std::vector<std::size_t>& rows,
                          const ScalerState& scaler);

struct EpochRecord {
  int epoch = 0;
  std::string phase;
  double train_loss = 0.0, val_loss = 0.0, val_r2 = 0.0, val_rmse = 0.0;
  double lr = 0.0, lambda_p = 0.0, lambda_reg = 0.0;
};

struct CurriculumReport {
  std::vector<EpochRecord> epochs;
  std::vector<int> phase_start_epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::string stop_reason;  // patience | r2_target | budget | aborted
  long parameter_count = 0;

  std::string to_jsonl() const;   // one record per epoch
  std::string summary_json() const;
};

struct TrainOptions {
  int batch_size = 32;
  double r2_target = 0.95;
  int patience = 100;
  int max_total_epochs = 1200;
};

struct CurriculumResult {
  ParameterSet best_params;
  CurriculumReport report;
};

/// Runs the phases in order with their freeze plans, lambda schedules, clip
/// norms and schedulers. Anchor + fisher are required whenever a phase has
/// lambda_reg > 0. Deterministic under seed. Aborts (keeping the last
/// finite checkpoint in the report) after 5 consecutive non-finite epochs.
CurriculumResult run_curriculum(const Network& net, ParameterSet params,
                                const TrainData& train, const TrainData& val,
                                const std::vector<PhaseConfig>& phases,
                                const std::optional<ParameterSet>& anchor,
                                const std::optional<FisherDiag>& fisher,
                                std::uint64_t seed, const TrainOptions& opts = {});

/// Eval-mode forward pass (no dropout, running statistics).
ForwardOutput predict(const Network& net, ParameterSet& params, const Matrix& X);

struct GridSearchSpace {
  std::vector<double> learning_rates{1e-3};
  std::vector<double> lambda_ps{0.05};
  std::vector<double> lambda_regs{0.0};
  std::vector<double> dropouts{0.1};
};

struct GridPointResult {
  double lr = 0.0, lambda_p = 0.0, lambda_reg = 0.0, dropout = 0.0;
  std::vector<double> fold_losses;
  double mean_val_loss = 0.0;
  double cov = 0.0;  // std / mean across folds
};

struct GridSearchResult {
  GridPointResult best;
  std::vector<GridPointResult> all;
};

/// Exhaustive reduced-grid search with group-aware k-fold CV; scalers are
/// refitted per fold from the fold's training rows only.
GridSearchResult grid_search_cv(const GridSearchSpace& space, const Dataset& ds,
                                const NetworkConfig& base_cfg, int k,
                                std::uint64_t seed, int epochs_per_fold = 30,
                                const std::optional<ParameterSet>& anchor = std::nullopt,
                                const std::optional<FisherDiag>& fisher = std::nullopt);

}  // namespace pisorb
