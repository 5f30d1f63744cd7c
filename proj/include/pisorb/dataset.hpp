#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Sorption data ingestion, physics-informed feature engineering, robust
// scaling, and experiment-level (group-aware) partitioning.

namespace pisorb {

inline constexpr double kGasConstant = 8.314;       // J/(mol K)
inline constexpr double kCriticalTempK = 190.6;     // methane Tc
inline constexpr double kCriticalPressureMPa = 4.60;  // methane Pc
inline constexpr int kNumFeatures = 12;

struct Measurement {
  std::string experiment_id;
  double temperature_K = 0.0;
  double pressure_MPa = 0.0;
  double moisture_wt = 0.0;   // wt.%
  double ash_wt = 0.0;        // wt.%
  double volatile_wt = 0.0;   // wt.%
  double adsorption = 0.0;    // m^3/t
};

struct Dataset {
  std::vector<Measurement> rows;
};

struct LoadReport {
  Dataset data;
  int rejected_missing = 0;
  int rejected_duplicate = 0;
  int rejected_invalid = 0;
  std::vector<std::string> messages;
};

struct CsvSchema {
  bool temperature_celsius = false;
  std::map<std::string, std::string> column_renames;  // canonical -> file header
};

CsvSchema load_schema(const std::string& path);

/// CSV ingestion. Duplicate rows and rows with missing cells are rejected
/// (counted, never silently dropped). Throws on missing columns, empty
/// files, and unparseable cells (row and column named).
LoadReport load_dataset(const std::string& path, const CsvSchema& schema = {});

struct OutlierFlag {
  std::size_t row = 0;
  std::string variable;
  double value = 0.0;
};

struct OutlierReport {
  bool sufficient = true;
  std::vector<OutlierFlag> flags;  // rows are reported, never removed
};

/// 3x IQR fence screen per variable; requires >= 4 rows.
OutlierReport screen_outliers(const Dataset& ds);

using FeatureVector = std::array<double, kNumFeatures>;

const std::array<std::string, kNumFeatures>& feature_names();

/// [t, p, moisture, ash, volatile, t_r, p_r, fc, om, beta, pt, mv].
/// Throws when the mass balance gives fixed carbon < 0.
FeatureVector engineer_features(const Measurement& m);

struct ScalerState {
  FeatureVector median{};
  FeatureVector iqr{};  // strictly positive after degenerate substitution
  std::vector<std::string> warnings;
};

ScalerState fit_scaler(const std::vector<FeatureVector>& train);

FeatureVector transform(const FeatureVector& x, const ScalerState& s);
FeatureVector inverse_transform(const FeatureVector& z, const ScalerState& s);

/// Target transform: y_tilde = log(y + 1), inverse exp(y_tilde) - 1.
double transform_target(double y);
double inverse_target(double y_tilde);

/// Stratum = temperature band {<=303, 303-313, >313 K} x pressure regime
/// {<3, 3-6, >6 MPa}; label in [0, 9).
int stratum_label(const Measurement& m);

struct SplitResult {
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
  std::set<std::string> train_experiments;
  std::set<std::string> test_experiments;
  std::vector<int> partition;  // per measurement: 0 = train, 1 = test
  std::vector<int> stratum;    // per measurement
};

/// Group-aware split: experiments assigned whole to partitions, greedily
/// balancing stratum proportions. Leakage is zero by construction.
SplitResult group_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

std::string split_to_json(const SplitResult& s);
SplitResult split_from_json(const std::string& text, const Dataset& ds);

/// Each experiment lands in exactly one fold; fold sizes differ by <= 1.
std::vector<std::vector<std::string>> group_kfold(const Dataset& ds, int k,
                                                  std::uint64_t seed);

struct FeatureBalance {
  std::string feature;
  double ks = 0.0;
  double p_value = 1.0;
  double cohens_d = 0.0;
};

struct BalanceReport {
  std::vector<FeatureBalance> features;  // compositional features
  std::vector<double> rank_proportion_train;  // per rank category, sums to 1
  std::vector<double> rank_proportion_test;
  std::vector<double> rank_proportion_deviation;
};

BalanceReport verify_balance(const SplitResult& split, const Dataset& ds);

struct VifResult {
  std::vector<double> vif;           // >= 1, capped at 1e6
  std::vector<bool> collinear_flag;  // true where the cap fired
};

/// VIF_j = 1/(1 - R^2_j) from OLS of feature j on the remaining features.
VifResult compute_vif(const Eigen::MatrixXd& features);

}  // namespace pisorb
