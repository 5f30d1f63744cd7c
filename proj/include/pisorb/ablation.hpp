#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pisorb/isotherm.hpp"
#include "pisorb/trainer.hpp"
#include "pisorb/transfer.hpp"

// Four-variant ablation harness, deep-ensemble variants, evaluation
// metrics, and the bootstrap statistical testing stack.

namespace pisorb {

struct Metrics {
  double r2 = 0.0, rmse = 0.0, mae = 0.0, maxae = 0.0;
  bool r2_defined = true;  // false when targets are constant
};

/// Standard regression metrics; R2 flagged undefined on constant targets.
Metrics evaluate_metrics(const Vector& predictions, const Vector& targets);

/// Pooled-SD Cohen's d with (n-1) weighting; negative means sample a is
/// smaller. Zero pooled SD with unequal means yields +/-inf.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
};

/// Bootstrap paired t-test on squared-error differences: n_boot index
/// resamples, per-resample paired t, aggregated as the mean statistic with
/// a t-distribution p-value at n-1 degrees of freedom.
TTestResult bootstrap_paired_ttest(const std::vector<double>& errors_a,
                                   const std::vector<double>& errors_b,
                                   int n_boot = 100, std::uint64_t seed = 0);

inline constexpr double kBonferroniAlpha = 0.0125;  // 0.05 / 4

enum class VariantKind {
  Transfer,
  RandomRandom,
  RandomClassical,
  EnsembleStandard,
  EnsembleDiverse,
  EnsembleWeighted,
};

struct VariantSpec {
  VariantKind kind = VariantKind::RandomRandom;
  std::string tag = "random_random";
  int k = 1;      // ensemble size; >= 2 for ensemble kinds
  int top_m = 0;  // weighted ensembles; defaults to k/2 when 0
  bool identical_members = false;  // degenerate ensemble: one shared member seed

  static VariantSpec transfer();
  static VariantSpec random_random();
  static VariantSpec random_classical();
  static VariantSpec ensemble(VariantKind kind, int k, int top_m = 0);
};

struct AblationConfig {
  NetworkConfig net;
  std::vector<PhaseConfig> phases;
  TrainOptions train;
  std::string source_model;               // Transfer variant
  std::optional<FitResult> sips_fit;      // Transfer / RandomClassical head init
  bool use_ewc = true;                    // apply source fisher when present
};

struct VariantResult {
  std::string tag;
  Metrics log_space;
  Metrics original_units;
  Vector predictions;  // log1p space, test set
  bool incomplete = false;
  std::string stop_reason;
  int convergence_epoch = -1;  // first epoch at 95% of final val R2
  std::vector<double> member_val_losses;
  double member_spread = 0.0;  // mean per-sample std of member predictions
};

struct PairwiseTest {
  std::string tag_a, tag_b;
  double t = 0.0, p = 1.0, d = 0.0;
  bool significant = false;
};

struct AblationReport {
  std::vector<VariantResult> variants;
  std::vector<PairwiseTest> tests;

  std::string to_json() const;
};

/// Trains every variant on identical split/optimizer/budget and assembles
/// metrics plus all pairwise tests. Aborted member trainings flag the
/// variant incomplete; the report is still emitted.
AblationReport run_ablation(const TrainData& train, const TrainData& val,
                            const TrainData& test, const AblationConfig& cfg,
                            const std::vector<VariantSpec>& variants,
                            std::uint64_t seed);

}  // namespace pisorb
