#pragma once

#include <functional>
#include <optional>
#include <string>

#include "pisorb/nn.hpp"

// Training objectives: heteroscedastic data NLL, the four-component
// physics-consistency loss, the EWC anchoring penalty with its Fisher
// diagonal, and the composite total with the lambda_p schedule.

namespace pisorb {

struct PhysicsBreakdown {
  double sips = 0.0;
  double bounds = 0.0;
  double monotonicity = 0.0;
  double vant_hoff = 0.0;
  double total() const { return sips + bounds + monotonicity + vant_hoff; }
};

/// Gradients of the physics loss with respect to the per-sample head
/// outputs (mean head, transformed Sips parameters, and the probe-pass
/// mean head used by the monotonicity term).
struct PhysicsGrads {
  Vector d_mean, d_qmax, d_K, d_n, d_probe_mean;
};

/// Mean over the batch of (q - q_hat)^2 / (2 sigma^2) + log(sigma^2) / 2.
double data_nll(const Vector& target, const Vector& mean, const Vector& log_var);

/// Adds the NLL gradients (scaled by weight) into d_mean / d_logvar.
void data_nll_grad(const Vector& target, const Vector& mean, const Vector& log_var,
                   double weight, Vector& d_mean, Vector& d_logvar);

/// Pressure probe offset for the monotonicity constraint, MPa.
inline constexpr double kMonotonicityProbeMPa = 0.01;

/// Four-component physics loss. `mean` / `sips` come from the main forward
/// pass; `probe_mean` is the mean head evaluated at pressure + probe delta.
/// Pressures are in original MPa, temperatures in K. Pass `grads` to
/// accumulate gradients (scaled by weight).
PhysicsBreakdown physics_loss(const Vector& mean, const Matrix& sips,
                              const Vector& pressures_MPa, const Vector& temperatures_K,
                              const Vector& probe_mean, double weight = 1.0,
                              PhysicsGrads* grads = nullptr);

/// Fisher diagonal restricted to encoder blocks 2-5 (trainable tensors only).
using FisherDiag = ParameterSet;

/// 0.5 * sum F_i (theta_i - anchor_i)^2 over fisher-covered tensors.
double ewc_penalty(const ParameterSet& params, const ParameterSet& anchor,
                   const FisherDiag& fisher);

/// Adds lambda * F_i (theta_i - anchor_i) into grads.
void ewc_penalty_grad(const ParameterSet& params, const ParameterSet& anchor,
                      const FisherDiag& fisher, double lambda, ParameterSet& grads);

/// Mean over n samples of the squared per-sample gradients returned by
/// grad_fn. The network-level overload below delegates here.
using SampleGradFn = std::function<ParameterSet(Eigen::Index)>;
FisherDiag fisher_from_gradients(const SampleGradFn& grad_fn, Eigen::Index n);

/// Mean over source samples of the squared mean-head gradient, with unit
/// noise variance; encoder blocks 2-5 only. Model is evaluated in Eval mode.
FisherDiag compute_fisher_diag(const Network& net, ParameterSet& params,
                               const Matrix& source_inputs);

enum class Phase { Warmup, Finetune, Full };

/// Phase 1: 0.05; Phase 2: 0.05 + 0.15 (1 - exp(-(t-50)/50)) for phase-local
/// t >= 50, clamped to 0.05 below; Phase 3: 0.2.
double lambda_p_schedule(int epoch, Phase phase);

/// data + lambda_p * physics + lambda_reg * ewc; throws (naming the
/// component) on non-finite inputs.
double total_loss(double data, double physics, double ewc, double lambda_p,
                  double lambda_reg);

}  // namespace pisorb
