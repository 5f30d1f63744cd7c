#include "pisorb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

CsvSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("schema file not found: " + path);
  json j;
  in >> j;
  CsvSchema s;
  if (j.contains("temperature_unit")) {
    const std::string u = j["temperature_unit"].get<std::string>();
    if (u == "C")
      s.temperature_celsius = true;
    else if (u != "K")
      throw std::runtime_error("schema: temperature_unit must be K or C");
  }
  if (j.contains("columns")) {
    for (auto& [k, v] : j["columns"].items()) s.column_renames[k] = v.get<std::string>();
  }
  return s;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool valid_measurement(const Measurement& m) {
  if (!(m.temperature_K > 0.0)) return false;
  if (m.pressure_MPa < 0.0) return false;
  if (m.moisture_wt < 0.0 || m.ash_wt < 0.0 || m.volatile_wt < 0.0) return false;
  if (m.moisture_wt + m.ash_wt + m.volatile_wt > 100.0) return false;
  if (m.adsorption < 0.0) return false;
  return true;
}

}  // namespace

LoadReport load_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("data file not found: " + path);

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty file: " + path);
  const auto cols = split_csv_line(header);

  const std::vector<std::string> canonical = {"experiment_id", "temperature", "pressure",
                                              "moisture",      "ash",         "volatile",
                                              "adsorption"};
  std::map<std::string, int> col_index;
  for (const auto& name : canonical) {
    std::string actual = name;
    if (auto it = schema.column_renames.find(name); it != schema.column_renames.end())
      actual = it->second;
    const auto pos = std::find(cols.begin(), cols.end(), actual);
    if (pos == cols.end()) throw std::runtime_error("missing column: " + actual);
    col_index[name] = static_cast<int>(pos - cols.begin());
  }

  LoadReport rep;
  std::set<std::string> seen;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);

    bool missing = false;
    for (const auto& name : canonical) {
      const int ci = col_index[name];
      if (ci >= static_cast<int>(cells.size()) || cells[ci].empty()) missing = true;
    }
    if (missing) {
      ++rep.rejected_missing;
      continue;
    }

    Measurement m;
    m.experiment_id = cells[col_index["experiment_id"]];
    const std::vector<std::pair<std::string, double*>> numeric = {
        {"temperature", &m.temperature_K}, {"pressure", &m.pressure_MPa},
        {"moisture", &m.moisture_wt},      {"ash", &m.ash_wt},
        {"volatile", &m.volatile_wt},      {"adsorption", &m.adsorption}};
    for (const auto& [name, dst] : numeric) {
      if (!parse_double(cells[col_index[name]], *dst))
        throw std::runtime_error("unparseable cell at row " + std::to_string(row) +
                                 ", column " + name + ": '" + cells[col_index[name]] + "'");
    }
    if (schema.temperature_celsius) m.temperature_K += 273.15;

    if (!valid_measurement(m)) {
      ++rep.rejected_invalid;
      rep.messages.push_back("row " + std::to_string(row) + ": invariant violation");
      continue;
    }
    std::ostringstream key;
    key.precision(17);
    key << m.experiment_id << '|' << m.temperature_K << '|' << m.pressure_MPa << '|'
        << m.moisture_wt << '|' << m.ash_wt << '|' << m.volatile_wt << '|' << m.adsorption;
    if (!seen.insert(key.str()).second) {
      ++rep.rejected_duplicate;
      continue;
    }
    rep.data.rows.push_back(std::move(m));
  }
  if (rep.data.rows.empty() && rep.rejected_missing == 0 && rep.rejected_duplicate == 0 &&
      rep.rejected_invalid == 0)
    throw std::runtime_error("empty file: " + path);
  return rep;
}

OutlierReport screen_outliers(const Dataset& ds) {
  OutlierReport rep;
  if (ds.rows.size() < 4) {
    rep.sufficient = false;
    return rep;
  }
  const std::vector<std::pair<std::string, double Measurement::*>> vars = {
      {"temperature", &Measurement::temperature_K}, {"pressure", &Measurement::pressure_MPa},
      {"moisture", &Measurement::moisture_wt},      {"ash", &Measurement::ash_wt},
      {"volatile", &Measurement::volatile_wt},      {"adsorption", &Measurement::adsorption}};
  for (const auto& [name, member] : vars) {
    std::vector<double> v;
    v.reserve(ds.rows.size());
    for (const auto& m : ds.rows) v.push_back(m.*member);
    const double q1 = stats::quantile(v, 0.25);
    const double q3 = stats::quantile(v, 0.75);
    const double fence = 3.0 * (q3 - q1);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > q3 + fence || v[i] < q1 - fence)
        rep.flags.push_back({i, name, v[i]});
    }
  }
  return rep;
}

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "t", "p", "moisture", "ash", "volatile", "t_r", "p_r", "fc", "om", "beta", "pt", "mv"};
  return names;
}

FeatureVector engineer_features(const Measurement& m) {
  const double fc = 100.0 - (m.moisture_wt + m.ash_wt + m.volatile_wt);
  if (fc < 0.0)
    throw std::runtime_error("mass-balance violation (fixed carbon < 0) for experiment " +
                             m.experiment_id);
  FeatureVector f{};
  f[0] = m.temperature_K;
  f[1] = m.pressure_MPa;
  f[2] = m.moisture_wt;
  f[3] = m.ash_wt;
  f[4] = m.volatile_wt;
  f[5] = m.temperature_K / kCriticalTempK;
  f[6] = m.pressure_MPa / kCriticalPressureMPa;
  f[7] = fc;
  f[8] = (m.volatile_wt + fc) / 100.0;
  f[9] = 1.0 / (kGasConstant * m.temperature_K);
  f[10] = m.pressure_MPa * m.temperature_K;
  f[11] = m.moisture_wt * m.volatile_wt;
  return f;
}

ScalerState fit_scaler(const std::vector<FeatureVector>& train) {
  if (train.size() < 2) throw std::invalid_argument("fit_scaler: need >= 2 training rows");
  ScalerState s;
  for (int j = 0; j < kNumFeatures; ++j) {
    std::vector<double> col;
    col.reserve(train.size());
    for (const auto& f : train) col.push_back(f[j]);
    s.median[j] = stats::median(col);
    double w = stats::iqr(col);
    if (w <= 0.0) {
      w = 1.0;
      s.warnings.push_back("degenerate IQR for feature " + feature_names()[j] +
                           ", substituted 1.0");
    }
    s.iqr[j] = w;
  }
  return s;
}

FeatureVector transform(const FeatureVector& x, const ScalerState& s) {
  FeatureVector z{};
  for (int j = 0; j < kNumFeatures; ++j) z[j] = (x[j] - s.median[j]) / s.iqr[j];
  return z;
}

FeatureVector inverse_transform(const FeatureVector& z, const ScalerState& s) {
  FeatureVector x{};
  for (int j = 0; j < kNumFeatures; ++j) x[j] = z[j] * s.iqr[j] + s.median[j];
  return x;
}

double transform_target(double y) { return std::log1p(y); }
double inverse_target(double y_tilde) { return std::expm1(y_tilde); }

int stratum_label(const Measurement& m) {
  int tb = 0;
  if (m.temperature_K > 303.0) tb = 1;
  if (m.temperature_K > 313.0) tb = 2;
  int pb = 0;
  if (m.pressure_MPa >= 3.0) pb = 1;
  if (m.pressure_MPa > 6.0) pb = 2;
  return tb * 3 + pb;
}

namespace {

struct ExperimentInfo {
  std::string id;
  std::array<int, 9> strata{};  // measurement counts per stratum
  int n = 0;
};

std::vector<ExperimentInfo> collect_experiments(const Dataset& ds) {
  std::map<std::string, ExperimentInfo> by_id;
  for (const auto& m : ds.rows) {
    auto& e = by_id[m.experiment_id];
    e.id = m.experiment_id;
    e.strata[stratum_label(m)] += 1;
    e.n += 1;
  }
  std::vector<ExperimentInfo> out;
  out.reserve(by_id.size());
  for (auto& [id, e] : by_id) out.push_back(e);
  return out;
}

double stratum_deviation(const std::array<double, 9>& part, double part_n,
                         const std::array<double, 9>& total, double total_n) {
  if (part_n == 0.0) return 9.0;
  double dev = 0.0;
  for (int s = 0; s < 9; ++s)
    dev += std::fabs(part[s] / part_n - total[s] / total_n);
  return dev;
}

}  // namespace

SplitResult group_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("group_split: test_fraction must be in (0,1)");
  auto experiments = collect_experiments(ds);
  const std::size_t n_exp = experiments.size();
  if (n_exp < 2) throw std::invalid_argument("group_split: need >= 2 experiments");

  std::mt19937_64 rng(seed);
  std::shuffle(experiments.begin(), experiments.end(), rng);

  std::size_t n_test = static_cast<std::size_t>(std::lround(test_fraction * n_exp));
  n_test = std::clamp<std::size_t>(n_test, 1, n_exp - 1);

  std::array<double, 9> total{}, train_s{}, test_s{};
  double total_n = 0.0, train_n = 0.0, test_n = 0.0;
  for (const auto& e : experiments)
    for (int s = 0; s < 9; ++s) {
      total[s] += e.strata[s];
      total_n += e.strata[s];
    }

  SplitResult res;
  res.seed = seed;
  res.test_fraction = test_fraction;

  std::size_t test_assigned = 0, train_assigned = 0;
  const std::size_t n_train = n_exp - n_test;
  for (const auto& e : experiments) {
    bool to_test;
    if (test_assigned == n_test) {
      to_test = false;
    } else if (train_assigned == n_train) {
      to_test = true;
    } else {
      // try both placements, keep the one with smaller combined deviation
      auto test_try = test_s;
      double test_try_n = test_n;
      for (int s = 0; s < 9; ++s) test_try[s] += e.strata[s];
      test_try_n += e.n;
      const double dev_if_test =
          stratum_deviation(train_s, train_n, total, total_n) +
          stratum_deviation(test_try, test_try_n, total, total_n);

      auto train_try = train_s;
      double train_try_n = train_n;
      for (int s = 0; s < 9; ++s) train_try[s] += e.strata[s];
      train_try_n += e.n;
      const double dev_if_train =
          stratum_deviation(train_try, train_try_n, total, total_n) +
          stratum_deviation(test_s, test_n, total, total_n);

      // keep the test partition on pace with its target share
      const double pace = static_cast<double>(test_assigned) / n_test -
                          static_cast<double>(train_assigned) / n_train;
      to_test = dev_if_test < dev_if_train || (dev_if_test == dev_if_train && pace <= 0.0);
    }
    if (to_test) {
      res.test_experiments.insert(e.id);
      for (int s = 0; s < 9; ++s) test_s[s] += e.strata[s];
      test_n += e.n;
      ++test_assigned;
    } else {
      res.train_experiments.insert(e.id);
      for (int s = 0; s < 9; ++s) train_s[s] += e.strata[s];
      train_n += e.n;
      ++train_assigned;
    }
  }

  res.partition.reserve(ds.rows.size());
  res.stratum.reserve(ds.rows.size());
  for (const auto& m : ds.rows) {
    res.partition.push_back(res.test_experiments.count(m.experiment_id) ? 1 : 0);
    res.stratum.push_back(stratum_label(m));
  }
  return res;
}

std::string split_to_json(const SplitResult& s) {
  json j;
  j["seed"] = s.seed;
  j["test_fraction"] = s.test_fraction;
  j["train_experiments"] = std::vector<std::string>(s.train_experiments.begin(),
                                                    s.train_experiments.end());
  j["test_experiments"] = std::vector<std::string>(s.test_experiments.begin(),
                                                   s.test_experiments.end());
  return j.dump(2);
}

SplitResult split_from_json(const std::string& text, const Dataset& ds) {
  const json j = json::parse(text);
  SplitResult s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.test_fraction = j.at("test_fraction").get<double>();
  for (const auto& e : j.at("train_experiments")) s.train_experiments.insert(e.get<std::string>());
  for (const auto& e : j.at("test_experiments")) s.test_experiments.insert(e.get<std::string>());
  for (const auto& m : ds.rows) {
    const bool in_test = s.test_experiments.count(m.experiment_id) > 0;
    const bool in_train = s.train_experiments.count(m.experiment_id) > 0;
    if (in_test == in_train)
      throw std::runtime_error("split file does not cover experiment " + m.experiment_id);
    s.partition.push_back(in_test ? 1 : 0);
    s.stratum.push_back(stratum_label(m));
  }
  return s;
}

std::vector<std::vector<std::string>> group_kfold(const Dataset& ds, int k,
                                                  std::uint64_t seed) {
  auto experiments = collect_experiments(ds);
  if (k < 2 || k > static_cast<int>(experiments.size()))
    throw std::invalid_argument("group_kfold: k must be in [2, experiment count]");
  std::mt19937_64 rng(seed);
  std::shuffle(experiments.begin(), experiments.end(), rng);
  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t i = 0; i < experiments.size(); ++i)
    folds[i % k].push_back(experiments[i].id);
  return folds;
}

BalanceReport verify_balance(const SplitResult& split, const Dataset& ds) {
  std::vector<const Measurement*> train, test;
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    (split.partition[i] ? test : train).push_back(&ds.rows[i]);
  if (train.size() < 2 || test.size() < 2)
    throw std::invalid_argument("verify_balance: a partition has < 2 rows");

  BalanceReport rep;
  const auto comp_value = [](const Measurement& m, int which) {
    const double fc = 100.0 - (m.moisture_wt + m.ash_wt + m.volatile_wt);
    switch (which) {
      case 0: return m.moisture_wt;
      case 1: return m.ash_wt;
      case 2: return m.volatile_wt;
      case 3: return fc;
      default: return (m.volatile_wt + fc) / 100.0;
    }
  };
  const std::array<std::string, 5> names = {"moisture", "ash", "volatile", "fc", "om"};
  for (int which = 0; which < 5; ++which) {
    std::vector<double> a, b;
    for (auto* m : train) a.push_back(comp_value(*m, which));
    for (auto* m : test) b.push_back(comp_value(*m, which));
    FeatureBalance fb;
    fb.feature = names[which];
    fb.ks = stats::ks_statistic(a, b);
    fb.p_value = stats::ks_pvalue(fb.ks, a.size(), b.size());
    fb.cohens_d = stats::cohens_d(a, b);
    rep.features.push_back(fb);
  }

  // rank categories proxied by volatile matter content
  const auto rank_cat = [](const Measurement& m) {
    if (m.volatile_wt < 10.0) return 0;
    if (m.volatile_wt < 15.0) return 1;
    if (m.volatile_wt < 20.0) return 2;
    if (m.volatile_wt < 30.0) return 3;
    return 4;
  };
  rep.rank_proportion_train.assign(5, 0.0);
  rep.rank_proportion_test.assign(5, 0.0);
  for (auto* m : train) rep.rank_proportion_train[rank_cat(*m)] += 1.0;
  for (auto* m : test) rep.rank_proportion_test[rank_cat(*m)] += 1.0;
  for (auto& v : rep.rank_proportion_train) v /= static_cast<double>(train.size());
  for (auto& v : rep.rank_proportion_test) v /= static_cast<double>(test.size());
  for (int c = 0; c < 5; ++c)
    rep.rank_proportion_deviation.push_back(
        std::fabs(rep.rank_proportion_train[c] - rep.rank_proportion_test[c]));
  return rep;
}

VifResult compute_vif(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  const auto p = features.cols();
  if (p < 2) throw std::invalid_argument("compute_vif: need >= 2 features");
  if (n <= p) throw std::invalid_argument("compute_vif: need more rows than features");

  VifResult out;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd X(n, p);  // others + intercept
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < p; ++k)
      if (k != j) X.col(c++) = features.col(k);
    X.col(p - 1).setOnes();
    const Eigen::VectorXd y = features.col(j);
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd resid = y - X * beta;
    const double ss_res = resid.squaredNorm();
    const double ss_tot = (y.array() - y.mean()).square().sum();
    double vif;
    bool flag = false;
    if (ss_tot <= 0.0) {
      vif = 1e6;  // constant column regressed on anything
      flag = true;
    } else {
      const double r2 = 1.0 - ss_res / ss_tot;
      if (r2 >= 1.0 - 1e-12) {
        vif = 1e6;
        flag = true;
      } else {
        vif = std::min(1e6, 1.0 / (1.0 - r2));
        vif = std::max(vif, 1.0);
      }
    }
    out.vif.push_back(vif);
    out.collinear_flag.push_back(flag);
  }
  return out;
}

}  // namespace pisorb
