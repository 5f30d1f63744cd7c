#include "pisorb/loss.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace pisorb {

double data_nll(const Vector& target, const Vector& mean, const Vector& log_var) {
  const Eigen::Index n = target.size();
  if (mean.size() != n || log_var.size() != n)
    throw std::invalid_argument("data_nll: size mismatch");
  double L = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = std::exp(log_var[i]);
    const double r = target[i] - mean[i];
    L += r * r / (2.0 * var) + 0.5 * log_var[i];
  }
  return L / static_cast<double>(n);
}

void data_nll_grad(const Vector& target, const Vector& mean, const Vector& log_var,
                   double weight, Vector& d_mean, Vector& d_logvar) {
  const Eigen::Index n = target.size();
  const double inv_n = weight / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = std::exp(log_var[i]);
    const double r = target[i] - mean[i];
    d_mean[i] += inv_n * (-r / var);
    d_logvar[i] += inv_n * (-r * r / (2.0 * var) + 0.5);
  }
}

PhysicsBreakdown physics_loss(const Vector& mean, const Matrix& sips,
                              const Vector& pressures_MPa, const Vector& temperatures_K,
                              const Vector& probe_mean, double weight,
                              PhysicsGrads* grads) {
  const Eigen::Index n = mean.size();
  if (sips.rows() != n || pressures_MPa.size() != n || temperatures_K.size() != n ||
      probe_mean.size() != n)
    throw std::invalid_argument("physics_loss: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  if (grads) {
    grads->d_mean = Vector::Zero(n);
    grads->d_qmax = Vector::Zero(n);
    grads->d_K = Vector::Zero(n);
    grads->d_n = Vector::Zero(n);
    grads->d_probe_mean = Vector::Zero(n);
  }

  PhysicsBreakdown out;

  // Sips consistency: mean head vs its own physics head, in log1p space.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qm = sips(i, 0), K = sips(i, 1), nu = sips(i, 2);
    const double P = pressures_MPa[i];
    double qs = 0.0, dqs_dqm = 0.0, dqs_dK = 0.0, dqs_dn = 0.0;
    if (P > 0.0) {
      const double s = std::pow(K * P, nu);
      const double frac = s / (1.0 + s);
      qs = qm * frac;
      const double dfds = qm / ((1.0 + s) * (1.0 + s));
      dqs_dqm = frac;
      dqs_dK = dfds * nu * s / K;
      dqs_dn = dfds * s * std::log(K * P);
    }
    const double g = std::log1p(qs);
    const double diff = mean[i] - g;
    out.sips += diff * diff * inv_n;
    if (grads) {
      const double c = 2.0 * diff * inv_n * weight;
      grads->d_mean[i] += c;
      const double dg_dqs = 1.0 / (1.0 + qs);
      grads->d_qmax[i] += -c * dg_dqs * dqs_dqm;
      grads->d_K[i] += -c * dg_dqs * dqs_dK;
      grads->d_n[i] += -c * dg_dqs * dqs_dn;
    }
  }

  // Physical bounds on q_tilde = expm1(mean) in original units.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qt = std::expm1(mean[i]);
    const double dqt = std::exp(mean[i]);
    const double qm = sips(i, 0);
    if (qt < 0.0) {
      out.bounds += qt * qt * inv_n;
      if (grads) grads->d_mean[i] += weight * 2.0 * qt * dqt * inv_n;
    }
    if (qt > qm) {
      const double v = qt - qm;
      out.bounds += v * v * inv_n;
      if (grads) {
        grads->d_mean[i] += weight * 2.0 * v * dqt * inv_n;
        grads->d_qmax[i] += -weight * 2.0 * v * inv_n;
      }
    }
  }

  // Monotonicity via the forward pressure probe.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qt = std::expm1(mean[i]);
    const double qp = std::expm1(probe_mean[i]);
    const double v = qt - qp;
    if (v > 0.0) {
      out.monotonicity += v * v * inv_n;
      if (grads) {
        grads->d_mean[i] += weight * 2.0 * v * std::exp(mean[i]) * inv_n;
        grads->d_probe_mean[i] += -weight * 2.0 * v * std::exp(probe_mean[i]) * inv_n;
      }
    }
  }

  // Van't Hoff: OLS slope of ln K against 1/T must be non-negative.
  std::set<double> distinct(temperatures_K.begin(), temperatures_K.end());
  if (distinct.size() >= 2) {
    Vector x(n), lnK(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = 1.0 / temperatures_K[i];
      lnK[i] = std::log(sips(i, 1));
    }
    const double xbar = x.mean();
    double sxx = 0.0, sxy = 0.0;
    const double lbar = lnK.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      sxx += (x[i] - xbar) * (x[i] - xbar);
      sxy += (x[i] - xbar) * (lnK[i] - lbar);
    }
    const double slope = sxy / sxx;
    if (slope < 0.0) {
      out.vant_hoff = slope * slope;
      if (grads) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const double ds_dlnK = (x[i] - xbar) / sxx;
          grads->d_K[i] += weight * 2.0 * slope * ds_dlnK / sips(i, 1);
        }
      }
    }
  }
  return out;
}

double ewc_penalty(const ParameterSet& params, const ParameterSet& anchor,
                   const FisherDiag& fisher) {
  double L = 0.0;
  for (const auto& [name, F] : fisher) {
    const auto pit = params.find(name);
    const auto ait = anchor.find(name);
    if (pit == params.end() || ait == anchor.end())
      throw std::invalid_argument("ewc_penalty: tensor missing: " + name);
    if (pit->second.rows() != F.rows() || pit->second.cols() != F.cols() ||
        ait->second.rows() != F.rows() || ait->second.cols() != F.cols())
      throw std::invalid_argument("ewc_penalty: shape mismatch: " + name);
    L += 0.5 * (F.array() * (pit->second - ait->second).array().square()).sum();
  }
  return L;
}

void ewc_penalty_grad(const ParameterSet& params, const ParameterSet& anchor,
                      const FisherDiag& fisher, double lambda, ParameterSet& grads) {
  for (const auto& [name, F] : fisher) {
    const Matrix delta = params.at(name) - anchor.at(name);
    const Matrix g = lambda * F.cwiseProduct(delta);
    auto it = grads.find(name);
    if (it == grads.end())
      grads[name] = g;
    else
      it->second += g;
  }
}

FisherDiag fisher_from_gradients(const SampleGradFn& grad_fn, Eigen::Index n) {
  if (n <= 0) throw std::invalid_argument("fisher_from_gradients: empty dataset");
  FisherDiag fisher;
  for (Eigen::Index i = 0; i < n; ++i) {
    const ParameterSet g = grad_fn(i);
    for (const auto& [name, grad] : g) {
      auto it = fisher.find(name);
      if (it == fisher.end())
        fisher[name] = grad.array().square().matrix();
      else
        it->second += grad.array().square().matrix();
    }
  }
  for (auto& [name, F] : fisher) F /= static_cast<double>(n);
  return fisher;
}

FisherDiag compute_fisher_diag(const Network& net, ParameterSet& params,
                               const Matrix& source_inputs) {
  if (source_inputs.rows() == 0)
    throw std::invalid_argument("compute_fisher_diag: empty dataset");
  const int last_block = net.n_blocks();
  const auto names = net.encoder_block_names(2, std::min(5, last_block), false);
  const std::set<std::string> keep(names.begin(), names.end());

  return fisher_from_gradients(
      [&](Eigen::Index i) {
        ForwardCache cache;
        net.forward(params, source_inputs.row(i), Mode::Eval, 0, &cache, false);
        Vector d_mean = Vector::Ones(1);
        Vector d_logvar = Vector::Zero(1);
        Matrix d_sips = Matrix::Zero(1, 3);
        ParameterSet g = net.backward(params, cache, d_mean, d_logvar, d_sips);
        for (auto it = g.begin(); it != g.end();)
          it = keep.count(it->first) ? std::next(it) : g.erase(it);
        return g;
      },
      source_inputs.rows());
}

double lambda_p_schedule(int epoch, Phase phase) {
  switch (phase) {
    case Phase::Warmup: return 0.05;
    case Phase::Finetune: {
      if (epoch < 50) return 0.05;
      return 0.05 + 0.15 * (1.0 - std::exp(-(static_cast<double>(epoch) - 50.0) / 50.0));
    }
    case Phase::Full: return 0.2;
  }
  return 0.05;
}

double total_loss(double data, double physics, double ewc, double lambda_p,
                  double lambda_reg) {
  if (!std::isfinite(data)) throw std::runtime_error("total_loss: non-finite data term");
  if (!std::isfinite(physics))
    throw std::runtime_error("total_loss: non-finite physics term");
  if (!std::isfinite(ewc)) throw std::runtime_error("total_loss: non-finite ewc term");
  return data + lambda_p * physics + lambda_reg * ewc;
}

}  // namespace pisorb
