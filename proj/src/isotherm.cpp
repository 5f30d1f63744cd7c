#include "pisorb/isotherm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

std::string iso_kind_name(IsoKind k) {
  switch (k) {
    case IsoKind::Langmuir: return "langmuir";
    case IsoKind::Freundlich: return "freundlich";
    case IsoKind::Sips: return "sips";
    case IsoKind::CompLangmuir: return "comp_langmuir";
    case IsoKind::CompSips: return "comp_sips";
  }
  return "?";
}

IsothermParams IsothermParams::langmuir(double q_max, double K) {
  return {IsoKind::Langmuir, {q_max, K}};
}
IsothermParams IsothermParams::freundlich(double K_F, double n) {
  return {IsoKind::Freundlich, {K_F, n}};
}
IsothermParams IsothermParams::sips(double q_max, double K, double n) {
  return {IsoKind::Sips, {q_max, K, n}};
}
IsothermParams IsothermParams::comp_langmuir(double q_base, double K, double aV, double aM) {
  return {IsoKind::CompLangmuir, {q_base, K, aV, aM}};
}
IsothermParams IsothermParams::comp_sips(double q_base, double K, double n, double aV,
                                         double aM) {
  return {IsoKind::CompSips, {q_base, K, n, aV, aM}};
}

int param_count(IsoKind k) {
  switch (k) {
    case IsoKind::Langmuir: return 2;
    case IsoKind::Freundlich: return 2;
    case IsoKind::Sips: return 3;
    case IsoKind::CompLangmuir: return 4;
    case IsoKind::CompSips: return 5;
  }
  return 0;
}

void param_bounds(IsoKind k, std::vector<double>& lower, std::vector<double>& upper) {
  switch (k) {
    case IsoKind::Langmuir:
      lower = {0.0, 0.01};
      upper = {100.0, 10.0};
      break;
    case IsoKind::Freundlich:
      lower = {1e-6, 0.5};
      upper = {1e3, 10.0};
      break;
    case IsoKind::Sips:
      lower = {0.0, 0.01, 0.5};
      upper = {100.0, 10.0, 10.0};
      break;
    case IsoKind::CompLangmuir:
      lower = {0.0, 0.01, -5.0, -5.0};
      upper = {100.0, 10.0, 5.0, 5.0};
      break;
    case IsoKind::CompSips:
      lower = {0.0, 0.01, 0.5, -5.0, -5.0};
      upper = {100.0, 10.0, 10.0, 5.0, 5.0};
      break;
  }
}

namespace {

bool is_compositional(IsoKind k) {
  return k == IsoKind::CompLangmuir || k == IsoKind::CompSips;
}

// Value and (optionally) gradient of the model at one point.
double eval_grad(const IsothermParams& p, double P, const Composition* comp,
                 std::vector<double>* grad) {
  const auto& v = p.values;
  const int np = param_count(p.kind);
  if (grad) grad->assign(np, 0.0);

  double scale = 1.0;           // compositional capacity factor
  double d_scale_aV = 0.0, d_scale_aM = 0.0;
  if (is_compositional(p.kind)) {
    if (!comp) throw std::invalid_argument("compositional isotherm requires composition");
    const double vn = comp->volatile_wt / kVolatileNorm;
    const double mn = comp->moisture_wt / kMoistureNorm;
    const double aV = v[np - 2], aM = v[np - 1];
    const double g = 1.0 + aV * vn - aM * mn;
    if (g <= 0.0) return 0.0;  // clamped; gradients vanish
    scale = g;
    d_scale_aV = vn;
    d_scale_aM = -mn;
  }

  switch (p.kind) {
    case IsoKind::Langmuir:
    case IsoKind::CompLangmuir: {
      const double qm = v[0] * scale, K = v[1];
      const double u = K * P;
      const double frac = u / (1.0 + u);
      const double f = qm * frac;
      if (grad) {
        (*grad)[0] = scale * frac;
        (*grad)[1] = qm * P / ((1.0 + u) * (1.0 + u));
        if (p.kind == IsoKind::CompLangmuir) {
          (*grad)[2] = v[0] * d_scale_aV * frac;
          (*grad)[3] = v[0] * d_scale_aM * frac;
        }
      }
      return f;
    }
    case IsoKind::Freundlich: {
      const double KF = v[0], n = v[1];
      if (P <= 0.0) return 0.0;  // continuity limit
      const double pw = std::pow(P, 1.0 / n);
      if (grad) {
        (*grad)[0] = pw;
        (*grad)[1] = KF * pw * std::log(P) * (-1.0 / (n * n));
      }
      return KF * pw;
    }
    case IsoKind::Sips:
    case IsoKind::CompSips: {
      const double qm = v[0] * scale, K = v[1], n = v[2];
      if (P <= 0.0) return 0.0;
      const double s = std::pow(K * P, n);
      const double frac = s / (1.0 + s);
      const double f = qm * frac;
      if (grad) {
        const double dfds = qm / ((1.0 + s) * (1.0 + s));
        (*grad)[0] = scale * frac;
        (*grad)[1] = dfds * n * s / K;
        (*grad)[2] = dfds * s * std::log(K * P);
        if (p.kind == IsoKind::CompSips) {
          (*grad)[3] = v[0] * d_scale_aV * frac;
          (*grad)[4] = v[0] * d_scale_aM * frac;
        }
      }
      return f;
    }
  }
  return 0.0;
}

constexpr double kHuberDelta = 1.0;

double huber_loss(const Eigen::VectorXd& r) {
  double L = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double a = std::fabs(r[i]);
    L += a <= kHuberDelta ? 0.5 * r[i] * r[i] : kHuberDelta * (a - 0.5 * kHuberDelta);
  }
  return L;
}

struct LmOutcome {
  std::vector<double> theta;
  double loss = 0.0;
  bool converged = false;
  int n_evals = 0;
};

// Bounded LM with IRLS Huber reweighting and projected steps.
LmOutcome lm_fit(IsoKind kind, const std::vector<FitPoint>& data,
                 std::vector<double> theta, const std::vector<double>& lo,
                 const std::vector<double>& hi, int eval_budget) {
  const int np = param_count(kind);
  const int n = static_cast<int>(data.size());
  for (int j = 0; j < np; ++j) theta[j] = std::clamp(theta[j], lo[j], hi[j]);

  const auto residuals_jac = [&](const std::vector<double>& th, Eigen::VectorXd& r,
                                 Eigen::MatrixXd* J) {
    IsothermParams p{kind, th};
    std::vector<double> g;
    r.resize(n);
    if (J) J->resize(n, np);
    for (int i = 0; i < n; ++i) {
      const double f =
          eval_grad(p, data[i].pressure_MPa, &data[i].comp, J ? &g : nullptr);
      r[i] = data[i].adsorption - f;
      if (J)
        for (int j = 0; j < np; ++j) (*J)(i, j) = -g[j];  // dr/dtheta
    }
  };

  LmOutcome out;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  residuals_jac(theta, r, &J);
  out.n_evals = 1;
  double loss = huber_loss(r);
  double lambda = 1e-3;

  for (int iter = 0; iter < 200 && out.n_evals < eval_budget; ++iter) {
    // IRLS weights from the current residuals
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      const double a = std::fabs(r[i]);
      w[i] = a <= kHuberDelta ? 1.0 : kHuberDelta / a;
    }
    const Eigen::MatrixXd Jw = w.asDiagonal() * J;
    const Eigen::MatrixXd JtWJ = J.transpose() * Jw;
    const Eigen::VectorXd g = J.transpose() * (w.asDiagonal() * r);  // gradient of L

    // projected-gradient convergence test
    double pg_norm = 0.0;
    for (int j = 0; j < np; ++j) {
      double gj = g[j];
      if (theta[j] <= lo[j] && gj > 0.0) gj = 0.0;
      if (theta[j] >= hi[j] && gj < 0.0) gj = 0.0;
      pg_norm = std::max(pg_norm, std::fabs(gj));
    }
    if (pg_norm < 1e-8) {
      out.converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && out.n_evals < eval_budget; ++attempt) {
      Eigen::MatrixXd A = JtWJ;
      for (int j = 0; j < np; ++j)
        A(j, j) += lambda * std::max(JtWJ(j, j), 1e-12);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      std::vector<double> trial(np);
      for (int j = 0; j < np; ++j)
        trial[j] = std::clamp(theta[j] + step[j], lo[j], hi[j]);

      Eigen::VectorXd rt;
      residuals_jac(trial, rt, nullptr);
      ++out.n_evals;
      const double lt = huber_loss(rt);
      if (lt < loss) {
        const double rel = (loss - lt) / std::max(loss, 1e-300);
        theta = trial;
        loss = lt;
        lambda = std::max(lambda * 0.3, 1e-12);
        residuals_jac(theta, r, &J);
        accepted = true;
        if (rel < 1e-10) out.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      out.converged = true;  // no descent direction left: loss change is zero
      break;
    }
    if (out.converged) break;
  }
  out.theta = theta;
  out.loss = loss;
  return out;
}

std::vector<double> initial_guess(IsoKind kind, const std::vector<FitPoint>& data) {
  double qmax = 0.0;
  for (const auto& d : data) qmax = std::max(qmax, d.adsorption);
  const double qm0 = std::clamp(1.2 * qmax, 1e-3, 100.0);

  // Henry-slope estimate for K from the lowest positive pressure
  double K0 = 1.0;
  const FitPoint* low = nullptr;
  for (const auto& d : data)
    if (d.pressure_MPa > 0.0 && (!low || d.pressure_MPa < low->pressure_MPa)) low = &d;
  if (low && qm0 > 0.0) K0 = std::clamp(low->adsorption / (low->pressure_MPa * qm0), 0.01, 10.0);

  switch (kind) {
    case IsoKind::Langmuir: return {qm0, K0};
    case IsoKind::Sips: return {qm0, K0, 1.0};
    case IsoKind::CompLangmuir: return {qm0, K0, 0.0, 0.0};
    case IsoKind::CompSips: return {qm0, K0, 1.0, 0.0, 0.0};
    case IsoKind::Freundlich: {
      // log-log OLS where defined
      std::vector<double> lx, ly;
      for (const auto& d : data)
        if (d.pressure_MPa > 0.0 && d.adsorption > 0.0) {
          lx.push_back(std::log(d.pressure_MPa));
          ly.push_back(std::log(d.adsorption));
        }
      double KF0 = std::max(qmax, 1.0), n0 = 1.0;
      if (lx.size() >= 2) {
        try {
          const double slope = stats::ols_slope(lx, ly);
          if (slope > 1e-6) n0 = std::clamp(1.0 / slope, 0.5, 10.0);
          const double icept = stats::mean(ly) - slope * stats::mean(lx);
          KF0 = std::clamp(std::exp(icept), 1e-6, 1e3);
        } catch (...) {
        }
      }
      return {KF0, n0};
    }
  }
  return {};
}

}  // namespace

double eval_isotherm(const IsothermParams& p, double pressure_MPa,
                     const std::optional<Composition>& comp) {
  if (pressure_MPa < 0.0) throw std::invalid_argument("eval_isotherm: negative pressure");
  if (static_cast<int>(p.values.size()) != param_count(p.kind))
    throw std::invalid_argument("eval_isotherm: wrong parameter count");
  const Composition* c = comp ? &*comp : nullptr;
  if (is_compositional(p.kind) && !c)
    throw std::invalid_argument("compositional isotherm requires composition");
  return eval_grad(p, pressure_MPa, c, nullptr);
}

FitResult fit_isotherm(IsoKind kind, const std::vector<FitPoint>& data,
                       const std::optional<IsothermParams>& init) {
  const int np = param_count(kind);
  if (static_cast<int>(data.size()) < np + 1)
    throw std::invalid_argument("fit_isotherm: need at least " + std::to_string(np + 1) +
                                " data points");
  const double p0 = data.front().pressure_MPa;
  bool varied = false;
  for (const auto& d : data)
    if (d.pressure_MPa != p0) varied = true;
  if (!varied) throw std::invalid_argument("fit_isotherm: all pressures equal");

  std::vector<double> lo, hi;
  param_bounds(kind, lo, hi);

  std::vector<std::vector<double>> starts;
  int budget_per_start;
  if (init) {
    if (init->kind != kind || static_cast<int>(init->values.size()) != np)
      throw std::invalid_argument("fit_isotherm: init does not match variant");
    starts.push_back(init->values);
    budget_per_start = 5000;
  } else {
    const auto base = initial_guess(kind, data);
    starts.push_back(base);
    std::mt19937_64 rng(0x5150u + static_cast<unsigned>(kind));
    std::uniform_real_distribution<double> jit(0.5, 1.5);
    for (int s = 1; s < 5; ++s) {
      auto th = base;
      for (auto& v : th) v *= jit(rng);
      starts.push_back(th);
    }
    budget_per_start = 1000;
  }

  LmOutcome best;
  best.loss = std::numeric_limits<double>::infinity();
  int total_evals = 0;
  for (const auto& s : starts) {
    const int budget = std::min(budget_per_start, 5000 - total_evals);
    if (budget <= 0) break;
    auto o = lm_fit(kind, data, s, lo, hi, budget);
    total_evals += o.n_evals;
    if (o.loss < best.loss) best = o;
  }

  FitResult fr;
  fr.params = {kind, best.theta};
  fr.converged = best.converged;
  fr.n_evaluations = total_evals;

  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, ymean = 0.0;
  for (const auto& d : data) ymean += d.adsorption;
  ymean /= static_cast<double>(data.size());
  for (const auto& d : data) {
    const double pred = eval_grad(fr.params, d.pressure_MPa, &d.comp, nullptr);
    const double r = d.adsorption - pred;
    fr.residuals.push_back(r);
    ss_res += r * r;
    abs_sum += std::fabs(r);
    ss_tot += (d.adsorption - ymean) * (d.adsorption - ymean);
  }
  fr.rmse = std::sqrt(ss_res / static_cast<double>(data.size()));
  fr.mae = abs_sum / static_cast<double>(data.size());
  fr.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : std::numeric_limits<double>::quiet_NaN();
  return fr;
}

StratifiedFits fit_stratified(IsoKind kind, const std::vector<FitPoint>& data,
                              double edge_low, double edge_high) {
  StratifiedFits out;
  std::vector<FitPoint> high, medium, low;
  for (const auto& d : data) {
    // left-closed: volatile exactly at an edge goes to the upper stratum
    if (d.comp.volatile_wt < edge_low)
      high.push_back(d);
    else if (d.comp.volatile_wt < edge_high)
      medium.push_back(d);
    else
      low.push_back(d);
  }
  const int need = param_count(kind) + 1;
  const auto try_fit = [&](const std::vector<FitPoint>& pts, const char* name)
      -> std::optional<FitResult> {
    if (static_cast<int>(pts.size()) < need) {
      out.skipped.push_back(std::string(name) + ": insufficient data (" +
                            std::to_string(pts.size()) + " points)");
      return std::nullopt;
    }
    try {
      return fit_isotherm(kind, pts);
    } catch (const std::exception& e) {
      out.skipped.push_back(std::string(name) + ": " + e.what());
      return std::nullopt;
    }
  };
  out.high_rank = try_fit(high, "high");
  out.medium_rank = try_fit(medium, "medium");
  out.low_rank = try_fit(low, "low");
  return out;
}

EnsemblePrediction ensemble_predict(const FitResult& langmuir, const FitResult& freundlich,
                                    const FitResult& sips, double pressure_MPa) {
  if (!langmuir.converged || !freundlich.converged || !sips.converged)
    throw std::invalid_argument("ensemble_predict: all three fits must have converged");
  const double a = eval_isotherm(langmuir.params, pressure_MPa);
  const double b = eval_isotherm(freundlich.params, pressure_MPa);
  const double c = eval_isotherm(sips.params, pressure_MPa);
  EnsemblePrediction e;
  e.mean = (a + b + c) / 3.0;
  e.structural_variance =
      ((a - e.mean) * (a - e.mean) + (b - e.mean) * (b - e.mean) + (c - e.mean) * (c - e.mean)) /
      3.0;
  return e;
}

std::string fit_to_json(const FitResult& fit) {
  json j;
  j["variant"] = iso_kind_name(fit.params.kind);
  j["params"] = fit.params.values;
  j["r2"] = fit.r2;
  j["rmse"] = fit.rmse;
  j["mae"] = fit.mae;
  j["n_evaluations"] = fit.n_evaluations;
  j["converged"] = fit.converged;
  j["residuals"] = fit.residuals;
  return j.dump(2);
}

FitResult fit_from_json(const std::string& text) {
  const json j = json::parse(text);
  FitResult fr;
  const std::string name = j.at("variant").get<std::string>();
  bool found = false;
  for (IsoKind k : {IsoKind::Langmuir, IsoKind::Freundlich, IsoKind::Sips,
                    IsoKind::CompLangmuir, IsoKind::CompSips}) {
    if (iso_kind_name(k) == name) {
      fr.params.kind = k;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("unknown isotherm variant: " + name);
  fr.params.values = j.at("params").get<std::vector<double>>();
  fr.r2 = j.at("r2").get<double>();
  fr.rmse = j.at("rmse").get<double>();
  fr.mae = j.at("mae").get<double>();
  fr.n_evaluations = j.at("n_evaluations").get<int>();
  fr.converged = j.at("converged").get<bool>();
  if (j.contains("residuals")) fr.residuals = j.at("residuals").get<std::vector<double>>();
  return fr;
}

}  // namespace pisorb
