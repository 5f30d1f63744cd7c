#include "pisorb/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

PredictFn make_predictor(const Network& net, ParameterSet& params) {
  return [&net, &params](const Matrix& X) -> Vector {
    return net.forward(params, X, Mode::Eval, 0).mean;
  };
}

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// model value for coalition mask: mean over background substitutions
double coalition_value(const PredictFn& f, const Vector& x, const Matrix& background,
                       std::uint32_t mask) {
  Matrix Z = background;
  const int d = static_cast<int>(x.size());
  for (int j = 0; j < d; ++j)
    if (mask & (1u << j)) Z.col(j).setConstant(x[j]);
  return f(Z).mean();
}

}  // namespace

ShapMatrix kernel_shap(const PredictFn& f, const Matrix& X_explain,
                       const Matrix& background, int n_coalitions,
                       std::uint64_t seed, bool exact) {
  if (background.rows() == 0)
    throw std::invalid_argument("kernel_shap: empty background");
  const int d = static_cast<int>(X_explain.cols());
  if (d < 2 || d > 20) throw std::invalid_argument("kernel_shap: bad feature count");

  ShapMatrix out;
  out.base = f(background).mean();
  out.fx = f(X_explain);
  out.phi.resize(X_explain.rows(), d);

  // coalition masks and weights, shared across explained rows
  std::map<std::uint32_t, double> coalitions;
  if (exact) {
    const std::uint32_t full = (1u << d) - 1;
    for (std::uint32_t m = 1; m < full; ++m) {
      const int s = static_cast<int>(std::popcount(m));
      coalitions[m] = (d - 1.0) / (binomial(d, s) * s * (d - s));
    }
  } else {
    // size distribution proportional to the total kernel mass per size,
    // uniform subset within a size; each draw then counts with weight 1
    std::vector<double> size_w(d - 1);
    for (int s = 1; s < d; ++s) size_w[s - 1] = (d - 1.0) / (s * (d - s));
    std::mt19937_64 rng(stats::mix_seed(seed, 0x5uLL));
    std::discrete_distribution<int> size_dist(size_w.begin(), size_w.end());
    std::vector<int> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    for (int c = 0; c < n_coalitions; ++c) {
      const int s = size_dist(rng) + 1;
      std::shuffle(idx.begin(), idx.end(), rng);
      std::uint32_t m = 0;
      for (int j = 0; j < s; ++j) m |= 1u << idx[j];
      coalitions[m] += 1.0;
    }
  }

  const int nc = static_cast<int>(coalitions.size());
  for (Eigen::Index r = 0; r < X_explain.rows(); ++r) {
    const Vector x = X_explain.row(r).transpose();
    const double span = out.fx[r] - out.base;

    // eliminate the last feature to enforce efficiency exactly
    Matrix A(nc, d - 1);
    Vector t(nc), w(nc);
    int row = 0;
    for (const auto& [mask, weight] : coalitions) {
      const double z_last = (mask & (1u << (d - 1))) ? 1.0 : 0.0;
      for (int j = 0; j < d - 1; ++j)
        A(row, j) = ((mask & (1u << j)) ? 1.0 : 0.0) - z_last;
      t[row] = coalition_value(f, x, background, mask) - out.base - z_last * span;
      w[row] = weight;
      ++row;
    }
    const Matrix Aw = w.asDiagonal() * A;
    const Vector phi_head =
        (A.transpose() * Aw).ldlt().solve(A.transpose() * (w.asDiagonal() * t));
    for (int j = 0; j < d - 1; ++j) out.phi(r, j) = phi_head[j];
    out.phi(r, d - 1) = span - phi_head.sum();
  }
  return out;
}

ShapSummary shap_summary(const ShapMatrix& shap) {
  const Eigen::Index n = shap.phi.rows(), d = shap.phi.cols();
  if (n == 0) throw std::invalid_argument("shap_summary: empty attribution matrix");

  ShapSummary s;
  s.importance = shap.phi.cwiseAbs().colwise().mean().transpose();
  const double total = s.importance.sum();
  s.share_percent = total > 0.0 ? Vector(100.0 * s.importance / total)
                                : Vector(Vector::Zero(d));

  s.ranking.resize(d);
  std::iota(s.ranking.begin(), s.ranking.end(), 0);
  std::stable_sort(s.ranking.begin(), s.ranking.end(),
                   [&](int a, int b) { return s.importance[a] > s.importance[b]; });

  s.interaction.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      std::vector<double> a(shap.phi.col(i).begin(), shap.phi.col(i).end());
      std::vector<double> b(shap.phi.col(j).begin(), shap.phi.col(j).end());
      s.interaction(i, j) = i == j ? 1.0 : stats::pearson(a, b);
    }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j)
      if (std::fabs(s.interaction(i, j)) > 0.5)
        s.strong_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));

  s.percent_positive = Vector::Zero(d);
  s.percent_negative = Vector::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index pos = 0, neg = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (shap.phi(i, j) > 0.0) ++pos;
      else if (shap.phi(i, j) < 0.0) ++neg;
    }
    s.percent_positive[j] = 100.0 * pos / static_cast<double>(n);
    s.percent_negative[j] = 100.0 * neg / static_cast<double>(n);
  }
  return s;
}

AleCurve ale_curve(const PredictFn& f, const Matrix& X, int feature, int n_bins) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw std::invalid_argument("ale_curve: need >= 2 rows");
  AleCurve curve;
  curve.feature = feature;

  std::vector<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = X(i, feature);

  // tie-merged quantile edges
  std::vector<double> edges;
  for (int k = 0; k <= n_bins; ++k) {
    const double q = stats::quantile(v, static_cast<double>(k) / n_bins);
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  if (edges.size() < 2) {
    curve.constant_feature = true;
    curve.edges = Vector::Constant(2, edges.empty() ? 0.0 : edges.front());
    curve.values = Vector::Zero(2);
    curve.bin_counts = Vector::Constant(1, static_cast<double>(n));
    return curve;
  }

  const int nb = static_cast<int>(edges.size()) - 1;
  std::vector<std::vector<Eigen::Index>> members(nb);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = std::lower_bound(edges.begin() + 1, edges.end(), v[i]);
    int k = static_cast<int>(it - edges.begin()) - 1;
    k = std::clamp(k, 0, nb - 1);
    members[k].push_back(i);
  }

  Vector delta = Vector::Zero(nb);
  curve.bin_counts.resize(nb);
  for (int k = 0; k < nb; ++k) {
    curve.bin_counts[k] = static_cast<double>(members[k].size());
    if (members[k].empty()) continue;
    Matrix lo(members[k].size(), X.cols()), hi(members[k].size(), X.cols());
    for (std::size_t m = 0; m < members[k].size(); ++m) {
      lo.row(m) = X.row(members[k][m]);
      hi.row(m) = X.row(members[k][m]);
      lo(m, feature) = edges[k];
      hi(m, feature) = edges[k + 1];
    }
    delta[k] = (f(hi) - f(lo)).mean();
  }

  Vector c = Vector::Zero(nb + 1);
  for (int k = 0; k < nb; ++k) c[k + 1] = c[k] + delta[k];

  // density-weighted centering over per-bin midpoint values
  double wmean = 0.0;
  for (int k = 0; k < nb; ++k)
    wmean += curve.bin_counts[k] * 0.5 * (c[k] + c[k + 1]);
  wmean /= static_cast<double>(n);
  c.array() -= wmean;

  curve.edges = Eigen::Map<Vector>(edges.data(), static_cast<Eigen::Index>(edges.size()));
  curve.values = c;
  curve.range = c.maxCoeff() - c.minCoeff();
  if (nb >= 2) {
    double acc = 0.0;
    double prev = (c[1] - c[0]) / (edges[1] - edges[0]);
    for (int k = 1; k < nb; ++k) {
      const double s = (c[k + 1] - c[k]) / (edges[k + 1] - edges[k]);
      acc += std::fabs(s - prev);
      prev = s;
    }
    curve.curvature = acc / (nb - 1);
  }
  return curve;
}

AgreementReport shap_ale_agreement(const Vector& shap_importance,
                                   const Vector& ale_ranges,
                                   const std::vector<double>& vif) {
  const Eigen::Index d = shap_importance.size();
  if (ale_ranges.size() != d)
    throw std::invalid_argument("shap_ale_agreement: feature count mismatch");

  AgreementReport rep;
  std::vector<double> si(d), ar(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    si[j] = -shap_importance[j];  // rank 1 = most important
    ar[j] = -ale_ranges[j];
  }
  rep.shap_rank = stats::average_ranks(si);
  rep.ale_rank = stats::average_ranks(ar);
  rep.spearman = stats::spearman(rep.shap_rank, rep.ale_rank);
  rep.rank_delta.resize(d);
  for (Eigen::Index j = 0; j < d; ++j)
    rep.rank_delta[j] = rep.shap_rank[j] - rep.ale_rank[j];
  rep.vif = vif;
  return rep;
}

std::string explanation_bundle_json(const ShapMatrix& shap, const ShapSummary& summary,
                                    const std::vector<AleCurve>& curves,
                                    const AgreementReport& agreement,
                                    const std::vector<std::string>& feature_names) {
  json j;
  j["base_value"] = shap.base;
  json phi = json::array();
  for (Eigen::Index r = 0; r < shap.phi.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < shap.phi.cols(); ++c) row.push_back(shap.phi(r, c));
    phi.push_back(std::move(row));
  }
  j["phi"] = std::move(phi);

  json imp = json::array();
  for (Eigen::Index k = 0; k < summary.importance.size(); ++k) {
    json e;
    e["feature"] = feature_names[k];
    e["importance"] = summary.importance[k];
    e["share_percent"] = summary.share_percent[k];
    e["percent_positive"] = summary.percent_positive[k];
    e["percent_negative"] = summary.percent_negative[k];
    imp.push_back(std::move(e));
  }
  j["importance"] = std::move(imp);
  json order = json::array();
  for (int k : summary.ranking) order.push_back(feature_names[k]);
  j["ranking"] = std::move(order);

  json inter = json::array();
  for (Eigen::Index r = 0; r < summary.interaction.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < summary.interaction.cols(); ++c)
      row.push_back(summary.interaction(r, c));
    inter.push_back(std::move(row));
  }
  j["interaction"] = std::move(inter);
  json pairs = json::array();
  for (const auto& [a, b] : summary.strong_pairs)
    pairs.push_back({feature_names[a], feature_names[b]});
  j["strong_pairs"] = std::move(pairs);

  json ale = json::array();
  for (const auto& c : curves) {
    json e;
    e["feature"] = feature_names[c.feature];
    e["edges"] = std::vector<double>(c.edges.begin(), c.edges.end());
    e["values"] = std::vector<double>(c.values.begin(), c.values.end());
    e["density"] = std::vector<double>(c.bin_counts.begin(), c.bin_counts.end());
    e["range"] = c.range;
    e["curvature"] = c.curvature;
    e["constant_feature"] = c.constant_feature;
    ale.push_back(std::move(e));
  }
  j["ale"] = std::move(ale);

  json agg;
  agg["spearman"] = agreement.spearman;
  json table = json::array();
  for (std::size_t k = 0; k < agreement.shap_rank.size(); ++k) {
    json e;
    e["feature"] = feature_names[k];
    e["shap_rank"] = agreement.shap_rank[k];
    e["ale_rank"] = agreement.ale_rank[k];
    e["rank_delta"] = agreement.rank_delta[k];
    if (k < agreement.vif.size()) e["vif"] = agreement.vif[k];
    table.push_back(std::move(e));
  }
  agg["table"] = std::move(table);
  j["agreement"] = std::move(agg);
  return j.dump(2);
}

}  // namespace pisorb
