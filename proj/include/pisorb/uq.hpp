#pragma once

#include <string>
#include <vector>

#include "pisorb/loss.hpp"
#include "pisorb/nn.hpp"

// Monte Carlo Dropout inference, joint aleatoric/epistemic propagation,
// temperature scaling, calibration metrics, and the diagonal-Laplace
// cross-check.

namespace pisorb {

struct McPasses {
  Matrix means;     // n_mc x n
  Matrix log_vars;  // n_mc x n
};

/// n_mc stochastic forward passes in McDropout mode with per-pass derived
/// seeds. Deterministic for a fixed seed.
McPasses mc_dropout_predict(const Network& net, ParameterSet& params, const Matrix& X,
                            int n_mc = 100, std::uint64_t seed = 0);

struct PredictiveDistribution {
  Vector mean;          // log1p space
  Vector sigma_epi;     // sample std of pass means
  Vector sigma_ale;     // sqrt(mean exp(log_var))
  Vector sigma_total;   // sqrt(epi^2 + ale^2)
  double tau = 1.0;
  int n_mc = 0;
};

/// Law-of-total-variance reduction of the pass mixture into a single
/// Gaussian per sample (tau = 1).
PredictiveDistribution propagate_joint(const McPasses& passes);

/// Mean over samples of sigma_epi^2 / sigma_total^2, as percent.
double epistemic_fraction_percent(const PredictiveDistribution& pred);

// Two-sided Gaussian multipliers for the 68/90/95/99% central intervals.
inline constexpr double kZLevels[4] = {0.9945, 1.6449, 1.9600, 2.5758};
inline constexpr double kNominal[4] = {0.68, 0.90, 0.95, 0.99};

/// ECE at the four standard levels for sigma scaled by tau.
double expected_calibration_error(const Vector& mean, const Vector& sigma_total,
                                  const Vector& targets, double tau);

/// Grid argmin of ECE over [0.1, 3.0] step 0.01; ties break toward the
/// smallest tau.
double fit_temperature(const PredictiveDistribution& pred, const Vector& targets,
                       double lo = 0.1, double hi = 3.0, double step = 0.01);

struct CalibrationReport {
  double ece = 0.0;
  double coverage[4] = {0, 0, 0, 0};
  double tau = 1.0;
  double sharpness = 0.0;  // mean 3.92 tau sigma_total
  double spearman = 0.0;   // rho(|error|, sigma_total)
  double nll = 0.0;
  double crps = 0.0;
  bool nll_degenerate = false;  // sigma = 0 with nonzero error somewhere

  std::string to_json() const;
};

/// Metrics for the tau-scaled predictive Gaussians. Requires >= 20 samples.
CalibrationReport calibration_metrics(const PredictiveDistribution& pred,
                                      const Vector& targets);

/// Posterior variance of one parameter under the diagonal-Fisher Laplace
/// approximation: 1 / (F * n_obs + prior_precision).
double laplace_param_variance(double fisher, double n_obs, double prior_precision);

/// Delta-method epistemic sigma per sample from a diagonal-Fisher Laplace
/// posterior: var_i = 1 / (F_i * n_obs + prior_precision), propagated
/// through the linearized mean head. Cross-check only.
Vector laplace_diag(const Network& net, ParameterSet& params, const FisherDiag& fisher,
                    const Matrix& X, double n_obs, double prior_precision);

/// Per-sample records plus the calibration summary, in both log1p and
/// original units.
std::string uq_report_json(const PredictiveDistribution& pred,
                           const CalibrationReport& calib);

}  // namespace pisorb
