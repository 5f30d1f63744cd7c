#pragma once

#include <optional>
#include <string>
#include <vector>

// Classical adsorption isotherms (Langmuir, Freundlich, Sips, and the
// composition-aware variants) with bounded robust nonlinear least-squares
// fitting and the three-model ensemble.

namespace pisorb {

enum class IsoKind { Langmuir, Freundlich, Sips, CompLangmuir, CompSips };

std::string iso_kind_name(IsoKind k);

// Compositional normalizers for the effective-capacity scaling
// (1 + alpha_V * VM/30 - alpha_M * M/6).
inline constexpr double kVolatileNorm = 30.0;
inline constexpr double kMoistureNorm = 6.0;

struct Composition {
  double volatile_wt = 0.0;
  double moisture_wt = 0.0;
};

/// Parameter layout by kind:
///   Langmuir:      [q_max, K]
///   Freundlich:    [K_F, n]
///   Sips:          [q_max, K, n]
///   CompLangmuir:  [q_base, K, alpha_V, alpha_M]
///   CompSips:      [q_base, K, n, alpha_V, alpha_M]
struct IsothermParams {
  IsoKind kind = IsoKind::Langmuir;
  std::vector<double> values;

  static IsothermParams langmuir(double q_max, double K);
  static IsothermParams freundlich(double K_F, double n);
  static IsothermParams sips(double q_max, double K, double n);
  static IsothermParams comp_langmuir(double q_base, double K, double aV, double aM);
  static IsothermParams comp_sips(double q_base, double K, double n, double aV, double aM);
};

int param_count(IsoKind k);
void param_bounds(IsoKind k, std::vector<double>& lower, std::vector<double>& upper);

/// Adsorption in m^3/t at the given pressure. Compositional variants
/// require a composition; effective capacity is clamped at zero.
double eval_isotherm(const IsothermParams& p, double pressure_MPa,
                     const std::optional<Composition>& comp = std::nullopt);

struct FitPoint {
  double pressure_MPa = 0.0;
  double adsorption = 0.0;
  Composition comp;  // used by compositional variants only
};

struct FitResult {
  IsothermParams params;
  double r2 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  int n_evaluations = 0;
  bool converged = false;
  std::vector<double> residuals;  // observed - predicted, m^3/t
};

/// Bounded Levenberg-Marquardt with IRLS Huber reweighting (delta = 1.0)
/// and projected steps. Five deterministic multi-starts when no initial
/// guess is supplied. Function-evaluation budget 5000.
FitResult fit_isotherm(IsoKind kind, const std::vector<FitPoint>& data,
                       const std::optional<IsothermParams>& init = std::nullopt);

struct StratifiedFits {
  std::optional<FitResult> high_rank;    // volatile < 15 wt.%
  std::optional<FitResult> medium_rank;  // 15 <= volatile < 30
  std::optional<FitResult> low_rank;     // volatile >= 30
  std::vector<std::string> skipped;
};

StratifiedFits fit_stratified(IsoKind kind, const std::vector<FitPoint>& data,
                              double edge_low = 15.0, double edge_high = 30.0);

struct EnsemblePrediction {
  double mean = 0.0;
  double structural_variance = 0.0;  // population variance over the 3 models
};

/// All three fits (Langmuir, Freundlich, Sips) must have converged.
EnsemblePrediction ensemble_predict(const FitResult& langmuir, const FitResult& freundlich,
                                    const FitResult& sips, double pressure_MPa);

std::string fit_to_json(const FitResult& fit);
FitResult fit_from_json(const std::string& text);

}  // namespace pisorb
