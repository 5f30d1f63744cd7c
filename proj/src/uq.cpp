#include "pisorb/uq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

McPasses mc_dropout_predict(const Network& net, ParameterSet& params, const Matrix& X,
                            int n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw std::invalid_argument("mc_dropout_predict: n_mc must be >= 2");
  const Eigen::Index n = X.rows();
  McPasses out;
  out.means.resize(n_mc, n);
  out.log_vars.resize(n_mc, n);
  for (int j = 0; j < n_mc; ++j) {
    const std::uint64_t pass_seed = stats::mix_seed(seed, static_cast<std::uint64_t>(j));
    const ForwardOutput fo = net.forward(params, X, Mode::McDropout, pass_seed);
    out.means.row(j) = fo.mean.transpose();
    out.log_vars.row(j) = fo.log_var.transpose();
  }
  return out;
}

PredictiveDistribution propagate_joint(const McPasses& passes) {
  const Eigen::Index m = passes.means.rows();
  const Eigen::Index n = passes.means.cols();
  if (m < 2) throw std::invalid_argument("propagate_joint: need >= 2 passes");

  PredictiveDistribution pd;
  pd.n_mc = static_cast<int>(m);
  pd.mean = passes.means.colwise().mean().transpose();
  pd.sigma_epi.resize(n);
  pd.sigma_ale.resize(n);
  pd.sigma_total.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector col = passes.means.col(i);
    // shifted two-pass form: exactly zero when every pass agrees bitwise
    const double shift = col[0];
    double sd = 0.0, sd2 = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = col[j] - shift;
      sd += d;
      sd2 += d * d;
    }
    const double var_epi = std::max(
        0.0, (sd2 - sd * sd / static_cast<double>(m)) / static_cast<double>(m - 1));
    double var_ale = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) var_ale += std::exp(passes.log_vars(j, i));
    var_ale /= static_cast<double>(m);
    pd.sigma_epi[i] = std::sqrt(var_epi);
    pd.sigma_ale[i] = std::sqrt(var_ale);
    pd.sigma_total[i] = std::sqrt(var_epi + var_ale);
  }
  return pd;
}

double epistemic_fraction_percent(const PredictiveDistribution& pred) {
  const Eigen::Index n = pred.mean.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tot = pred.sigma_total[i] * pred.sigma_total[i];
    if (tot > 0.0) acc += pred.sigma_epi[i] * pred.sigma_epi[i] / tot;
  }
  return 100.0 * acc / static_cast<double>(n);
}

double expected_calibration_error(const Vector& mean, const Vector& sigma_total,
                                  const Vector& targets, double tau) {
  const Eigen::Index n = mean.size();
  if (targets.size() != n || sigma_total.size() != n)
    throw std::invalid_argument("expected_calibration_error: size mismatch");
  double ece = 0.0;
  for (int l = 0; l < 4; ++l) {
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::fabs(targets[i] - mean[i]) <= kZLevels[l] * tau * sigma_total[i]) ++inside;
    const double cov = static_cast<double>(inside) / static_cast<double>(n);
    ece += std::fabs(cov - kNominal[l]);
  }
  return ece / 4.0;
}

double fit_temperature(const PredictiveDistribution& pred, const Vector& targets,
                       double lo, double hi, double step) {
  if (!(lo <= hi) || step <= 0.0)
    throw std::invalid_argument("fit_temperature: empty grid");
  double best_tau = lo;
  double best_ece = std::numeric_limits<double>::infinity();
  const int n_steps = static_cast<int>(std::round((hi - lo) / step));
  for (int s = 0; s <= n_steps; ++s) {
    const double tau = lo + s * step;
    const double ece = expected_calibration_error(pred.mean, pred.sigma_total,
                                                  targets, tau);
    if (ece < best_ece) {  // strict: ties keep the smallest tau
      best_ece = ece;
      best_tau = tau;
    }
  }
  return best_tau;
}

CalibrationReport calibration_metrics(const PredictiveDistribution& pred,
                                      const Vector& targets) {
  const Eigen::Index n = pred.mean.size();
  if (targets.size() != n)
    throw std::invalid_argument("calibration_metrics: size mismatch");
  if (n < 20)
    throw std::invalid_argument("calibration_metrics: need >= 20 samples");

  CalibrationReport rep;
  rep.tau = pred.tau;

  for (int l = 0; l < 4; ++l) {
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::fabs(targets[i] - pred.mean[i]) <=
          kZLevels[l] * pred.tau * pred.sigma_total[i])
        ++inside;
    rep.coverage[l] = static_cast<double>(inside) / static_cast<double>(n);
    rep.ece += std::fabs(rep.coverage[l] - kNominal[l]);
  }
  rep.ece /= 4.0;

  std::vector<double> abs_err(n), sig(n);
  double nll = 0.0, crps = 0.0, sharp = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sc = pred.tau * pred.sigma_total[i];
    const double r = targets[i] - pred.mean[i];
    abs_err[i] = std::fabs(r);
    sig[i] = pred.sigma_total[i];
    sharp += 3.92 * sc;
    if (sc <= 0.0) {
      if (r != 0.0) {
        rep.nll_degenerate = true;
        nll = std::numeric_limits<double>::infinity();
      }
      // CRPS for a point mass is just |r|
      crps += std::fabs(r);
      continue;
    }
    if (std::isfinite(nll))
      nll += r * r / (2.0 * sc * sc) + 0.5 * std::log(2.0 * M_PI * sc * sc);
    crps += stats::crps_gaussian(targets[i], pred.mean[i], sc);
  }
  rep.nll = std::isfinite(nll) ? nll / static_cast<double>(n) : nll;
  rep.crps = crps / static_cast<double>(n);
  rep.sharpness = sharp / static_cast<double>(n);
  rep.spearman = stats::spearman(abs_err, sig);
  return rep;
}

double laplace_param_variance(double fisher, double n_obs, double prior_precision) {
  const double prec = fisher * n_obs + prior_precision;
  if (prec <= 0.0)
    throw std::invalid_argument("laplace_param_variance: zero precision");
  return 1.0 / prec;
}

Vector laplace_diag(const Network& net, ParameterSet& params, const FisherDiag& fisher,
                    const Matrix& X, double n_obs, double prior_precision) {
  if (fisher.empty()) throw std::invalid_argument("laplace_diag: empty fisher");
  // posterior variance per parameter
  FisherDiag post_var;
  for (const auto& [name, F] : fisher) {
    Matrix v(F.rows(), F.cols());
    for (Eigen::Index r = 0; r < F.rows(); ++r)
      for (Eigen::Index c = 0; c < F.cols(); ++c) {
        try {
          v(r, c) = laplace_param_variance(F(r, c), n_obs, prior_precision);
        } catch (const std::invalid_argument&) {
          throw std::invalid_argument("laplace_diag: zero precision for " + name);
        }
      }
    post_var[name] = std::move(v);
  }

  const Eigen::Index n = X.rows();
  Vector sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ForwardCache cache;
    net.forward(params, X.row(i), Mode::Eval, 0, &cache, false);
    Vector d_mean = Vector::Ones(1);
    Vector d_logvar = Vector::Zero(1);
    Matrix d_sips = Matrix::Zero(1, 3);
    const ParameterSet g = net.backward(params, cache, d_mean, d_logvar, d_sips);
    double var = 0.0;
    for (const auto& [name, v] : post_var) {
      const auto it = g.find(name);
      if (it == g.end()) continue;
      var += (it->second.array().square() * v.array()).sum();
    }
    sigma[i] = std::sqrt(var);
  }
  return sigma;
}

std::string uq_report_json(const PredictiveDistribution& pred,
                           const CalibrationReport& calib) {
  json j;
  json samples = json::array();
  const Eigen::Index n = pred.mean.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sc = pred.tau * pred.sigma_total[i];
    json s;
    s["mean"] = pred.mean[i];
    s["sigma_epistemic"] = pred.sigma_epi[i];
    s["sigma_aleatoric"] = pred.sigma_ale[i];
    s["sigma_total"] = pred.sigma_total[i];
    s["tau"] = pred.tau;
    const double z68 = kZLevels[0], z95 = kZLevels[2];
    s["pi68_log1p"] = {pred.mean[i] - z68 * sc, pred.mean[i] + z68 * sc};
    s["pi95_log1p"] = {pred.mean[i] - z95 * sc, pred.mean[i] + z95 * sc};
    s["pi68"] = {std::expm1(pred.mean[i] - z68 * sc), std::expm1(pred.mean[i] + z68 * sc)};
    s["pi95"] = {std::expm1(pred.mean[i] - z95 * sc), std::expm1(pred.mean[i] + z95 * sc)};
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  j["n_mc"] = pred.n_mc;
  j["epistemic_fraction_percent"] = epistemic_fraction_percent(pred);

  json c;
  c["ece"] = calib.ece;
  c["coverage"] = {calib.coverage[0], calib.coverage[1], calib.coverage[2],
                   calib.coverage[3]};
  c["tau"] = calib.tau;
  c["sharpness"] = calib.sharpness;
  c["spearman"] = calib.spearman;
  c["nll"] = calib.nll_degenerate ? json("inf") : json(calib.nll);
  c["nll_degenerate"] = calib.nll_degenerate;
  c["crps"] = calib.crps;
  j["calibration"] = std::move(c);
  return j.dump(2);
}

std::string CalibrationReport::to_json() const {
  json c;
  c["ece"] = ece;
  c["coverage"] = {coverage[0], coverage[1], coverage[2], coverage[3]};
  c["tau"] = tau;
  c["sharpness"] = sharpness;
  c["spearman"] = spearman;
  c["nll"] = nll_degenerate ? json("inf") : json(nll);
  c["nll_degenerate"] = nll_degenerate;
  c["crps"] = crps;
  return c.dump(2);
}

}  // namespace pisorb
