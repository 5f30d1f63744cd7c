#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pisorb/nn.hpp"

// Kernel SHAP attributions with exact efficiency, first-order ALE curves,
// and SHAP-ALE rank agreement.

namespace pisorb {

/// Batch prediction callback: scaled feature rows -> log1p predictions.
using PredictFn = std::function<Vector(const Matrix&)>;

/// Eval-mode mean-head wrapper around a trained network.
PredictFn make_predictor(const Network& net, ParameterSet& params);

struct ShapMatrix {
  Matrix phi;         // samples x features
  double base = 0.0;  // expected prediction over the background
  Vector fx;          // model prediction per explained row
};

/// Kernel SHAP. Sampled mode draws n_coalitions coalitions with probability
/// proportional to the Shapley kernel weight; exact mode enumerates all
/// 2^d - 2 proper coalitions (d <= 20). The efficiency constraint
/// base + sum(phi) = f(x) is enforced exactly inside the weighted
/// least-squares solve.
ShapMatrix kernel_shap(const PredictFn& f, const Matrix& X_explain,
                       const Matrix& background, int n_coalitions = 100,
                       std::uint64_t seed = 0, bool exact = false);

struct ShapSummary {
  Vector importance;              // mean |phi| per feature
  Vector share_percent;           // importance / sum * 100
  std::vector<int> ranking;       // feature indices, most important first
  Matrix interaction;             // Pearson correlation of attribution columns
  std::vector<std::pair<int, int>> strong_pairs;  // |rho| > 0.5
  Vector percent_positive;        // directional split per feature
  Vector percent_negative;
};

ShapSummary shap_summary(const ShapMatrix& shap);

struct AleCurve {
  int feature = 0;
  Vector edges;        // tie-merged quantile bin edges
  Vector values;       // centered accumulated effect at each edge
  Vector bin_counts;   // samples per bin (edges.size() - 1 entries)
  double range = 0.0;  // max - min of the centered curve
  double curvature = 0.0;  // mean |difference of successive bin slopes|
  bool constant_feature = false;
};

/// First-order ALE over tie-merged quantile bins; other features stay at
/// their observed values. Centering subtracts the density-weighted mean of
/// per-bin midpoint values, so the curve integrates to zero over the data.
AleCurve ale_curve(const PredictFn& f, const Matrix& X, int feature, int n_bins = 50);

struct AgreementReport {
  double spearman = 0.0;
  std::vector<double> shap_rank;   // average ranks, 1 = most important
  std::vector<double> ale_rank;
  std::vector<double> rank_delta;  // shap_rank - ale_rank
  std::vector<double> vif;
};

/// Spearman rank agreement between SHAP importances and ALE effect ranges,
/// annotated with per-feature VIF for collinearity context.
AgreementReport shap_ale_agreement(const Vector& shap_importance,
                                   const Vector& ale_ranges,
                                   const std::vector<double>& vif);

std::string explanation_bundle_json(const ShapMatrix& shap, const ShapSummary& summary,
                                    const std::vector<AleCurve>& curves,
                                    const AgreementReport& agreement,
                                    const std::vector<std::string>& feature_names);

}  // namespace pisorb
