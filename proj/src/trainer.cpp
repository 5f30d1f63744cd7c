#include "pisorb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"
#include "pisorb/transfer.hpp"

namespace pisorb {

using nlohmann::json;

std::vector<PhaseConfig> PhaseConfig::default_curriculum() {
  PhaseConfig warmup{Phase::Warmup, "warmup", 1e-3, 500, 0.0, 0.5,
                     SchedulerKind::Plateau, 60};
  PhaseConfig finetune{Phase::Finetune, "finetune", 5e-4, 400, 100.0, 0.5,
                       SchedulerKind::Plateau, 60};
  PhaseConfig full{Phase::Full, "full", 1e-4, 300, 10.0, 1.0,
                   SchedulerKind::CosineRestarts, 60};
  return {warmup, finetune, full};
}

std::vector<PhaseConfig> PhaseConfig::desk_curriculum(int warmup, int finetune, int full) {
  auto phases = default_curriculum();
  phases[0].max_epochs = warmup;
  phases[1].max_epochs = finetune;
  phases[2].max_epochs = full;
  return phases;
}

bool adamw_step(ParameterSet& params, const ParameterSet& grads, AdamWState& st,
                double lr, const std::set<std::string>* frozen) {
  for (const auto& [name, g] : grads) {
    if (frozen && frozen->count(name)) continue;
    if (!g.allFinite()) {
      ++st.skipped_steps;
      return false;
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    if (frozen && frozen->count(name)) continue;
    auto& m = st.m.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
    auto& v = st.v.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
    Matrix& theta = params.at(name);
    const Matrix mhat = m / bc1;
    const Matrix vhat = v / bc2;
    theta -= lr * (mhat.array() / (vhat.array().sqrt() + st.eps)).matrix();
    theta -= lr * st.weight_decay * theta;
  }
  return true;
}

double clip_grad_norm(ParameterSet& grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) g *= scale;
  }
  return norm;
}

void PlateauScheduler::observe(double val_loss) {
  if (val_loss < best - 1e-12) {
    best = val_loss;
    stale = 0;
  } else if (++stale >= patience) {
    lr = std::max(lr * factor, floor);
    stale = 0;
  }
}

double cosine_restart_lr(double base_lr, int epoch_in_phase, int period) {
  const double eta_min = 0.01 * base_lr;
  const int e = epoch_in_phase % period;
  return eta_min + (base_lr - eta_min) *
                       (1.0 + std::cos(M_PI * static_cast<double>(e) / period)) / 2.0;
}

TrainData make_train_data(const Dataset& ds, const std::vector<std::size_t>& rows,
                          const ScalerState& scaler) {
  TrainData td;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  td.X.resize(n, kNumFeatures);
  td.X_probe.resize(n, kNumFeatures);
  td.y.resize(n);
  td.P.resize(n);
  td.T.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Measurement& m = ds.rows[rows[i]];
    const auto z = transform(engineer_features(m), scaler);
    Measurement probe = m;
    probe.pressure_MPa += kMonotonicityProbeMPa;
    const auto zp = transform(engineer_features(probe), scaler);
    for (int j = 0; j < kNumFeatures; ++j) {
      td.X(i, j) = z[j];
      td.X_probe(i, j) = zp[j];
    }
    td.y[i] = transform_target(m.adsorption);
    td.P[i] = m.pressure_MPa;
    td.T[i] = m.temperature_K;
  }
  return td;
}

std::string CurriculumReport::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["phase"] = e.phase;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_r2"] = e.val_r2;
    j["val_rmse"] = e.val_rmse;
    j["lr"] = e.lr;
    j["lambda_p"] = e.lambda_p;
    j["lambda_reg"] = e.lambda_reg;
    out += j.dump() + "\n";
  }
  return out;
}

std::string CurriculumReport::summary_json() const {
  json j;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["stop_reason"] = stop_reason;
  j["total_epochs"] = epochs.size();
  j["phase_start_epochs"] = phase_start_epochs;
  j["parameter_count"] = parameter_count;
  if (!epochs.empty()) {
    j["final_val_r2"] = epochs.back().val_r2;
    j["final_val_rmse"] = epochs.back().val_rmse;
  }
  return j.dump(2);
}

ForwardOutput predict(const Network& net, ParameterSet& params, const Matrix& X) {
  return net.forward(params, X, Mode::Eval, 0, nullptr, false);
}

namespace {

struct ValMetrics {
  double loss = 0.0, r2 = 0.0, rmse = 0.0;
};

ValMetrics evaluate(const Network& net, ParameterSet& params, const TrainData& val) {
  const ForwardOutput out = predict(net, params, val.X);
  ValMetrics vm;
  vm.loss = data_nll(val.y, out.mean, out.log_var);
  const Vector resid = val.y - out.mean;
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (val.y.array() - val.y.mean()).square().sum();
  vm.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  vm.rmse = std::sqrt(ss_res / static_cast<double>(val.size()));
  return vm;
}

}  // namespace

CurriculumResult run_curriculum(const Network& net, ParameterSet params,
                                const TrainData& train, const TrainData& val,
                                const std::vector<PhaseConfig>& phases,
                                const std::optional<ParameterSet>& anchor,
                                const std::optional<FisherDiag>& fisher,
                                std::uint64_t seed, const TrainOptions& opts) {
  if (train.size() < 2) throw std::invalid_argument("run_curriculum: too little data");
  for (const auto& ph : phases)
    if (ph.lambda_reg > 0.0 && (!anchor || !fisher))
      throw std::invalid_argument(
          "run_curriculum: phase '" + ph.name +
          "' has lambda_reg > 0 but no anchor/fisher was provided");

  CurriculumResult res;
  CurriculumReport& rep = res.report;
  rep.parameter_count = net.parameter_count(params);

  AdamWState adam;
  int global_epoch = 0;
  int best_global = -1;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  int nonfinite_streak = 0;
  ParameterSet best_params = params;
  std::string stop_reason;

  const Eigen::Index n = train.size();

  for (const auto& ph : phases) {
    if (!stop_reason.empty()) break;
    rep.phase_start_epochs.push_back(global_epoch);
    const auto freeze = build_freeze_plan(net, ph.phase);
    PlateauScheduler plateau;
    plateau.lr = ph.base_lr;

    for (int pe = 0; pe < ph.max_epochs; ++pe) {
      if (global_epoch >= opts.max_total_epochs) {
        stop_reason = "budget";
        break;
      }
      const double lr = ph.scheduler == SchedulerKind::Plateau
                            ? plateau.lr
                            : cosine_restart_lr(ph.base_lr, pe, ph.cosine_period);
      const double lambda_p = ph.lambda_p_override >= 0.0
                                  ? ph.lambda_p_override
                                  : lambda_p_schedule(pe, ph.phase);

      // deterministic shuffle per epoch
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(stats::mix_seed(seed, 1000 + global_epoch));
      std::shuffle(order.begin(), order.end(), rng);

      double epoch_loss = 0.0;
      Eigen::Index covered = 0;
      Eigen::Index start = 0;
      int batch_idx = 0;
      while (start < n) {
        Eigen::Index bs = std::min<Eigen::Index>(opts.batch_size, n - start);
        if (n - start - bs == 1) bs += 1;  // avoid a trailing batch of one
        Matrix bX(bs, train.X.cols()), bXp(bs, train.X.cols());
        Vector by(bs), bP(bs), bT(bs);
        for (Eigen::Index i = 0; i < bs; ++i) {
          const Eigen::Index r = order[start + i];
          bX.row(i) = train.X.row(r);
          bXp.row(i) = train.X_probe.row(r);
          by[i] = train.y[r];
          bP[i] = train.P[r];
          bT[i] = train.T[r];
        }

        const std::uint64_t fseed =
            stats::mix_seed(seed, 2000003ULL * global_epoch + 2ULL * batch_idx);
        ForwardCache main_cache, probe_cache;
        const ForwardOutput out =
            net.forward(params, bX, Mode::Train, fseed, &main_cache, true, &freeze);
        const ForwardOutput probe =
            net.forward(params, bXp, Mode::Train, fseed + 1, &probe_cache, false);

        const double L_data = data_nll(by, out.mean, out.log_var);
        Vector d_mean = Vector::Zero(bs), d_logvar = Vector::Zero(bs);
        data_nll_grad(by, out.mean, out.log_var, 1.0, d_mean, d_logvar);

        PhysicsGrads pg;
        const PhysicsBreakdown pb =
            physics_loss(out.mean, out.sips, bP, bT, probe.mean, lambda_p, &pg);
        d_mean += pg.d_mean;
        Matrix d_sips(bs, 3);
        d_sips.col(0) = pg.d_qmax;
        d_sips.col(1) = pg.d_K;
        d_sips.col(2) = pg.d_n;

        ParameterSet grads = net.backward(params, main_cache, d_mean, d_logvar, d_sips);
        {
          const Vector zero = Vector::Zero(bs);
          const Matrix zero3 = Matrix::Zero(bs, 3);
          const ParameterSet pgrads =
              net.backward(params, probe_cache, pg.d_probe_mean, zero, zero3);
          for (auto& [name, g] : grads) g += pgrads.at(name);
        }

        double L_ewc = 0.0;
        if (ph.lambda_reg > 0.0) {
          L_ewc = ewc_penalty(params, *anchor, *fisher);
          ewc_penalty_grad(params, *anchor, *fisher, ph.lambda_reg, grads);
        }

        for (const auto& name : freeze)
          if (auto it = grads.find(name); it != grads.end()) it->second.setZero();

        clip_grad_norm(grads, ph.clip_norm);
        adamw_step(params, grads, adam, lr, &freeze);

        const double L = L_data + lambda_p * pb.total() + ph.lambda_reg * L_ewc;
        epoch_loss += L * static_cast<double>(bs);
        covered += bs;
        start += bs;
        ++batch_idx;
      }
      epoch_loss /= static_cast<double>(covered);

      const ValMetrics vm = evaluate(net, params, val);

      EpochRecord er;
      er.epoch = global_epoch;
      er.phase = ph.name;
      er.train_loss = epoch_loss;
      er.val_loss = vm.loss;
      er.val_r2 = vm.r2;
      er.val_rmse = vm.rmse;
      er.lr = lr;
      er.lambda_p = lambda_p;
      er.lambda_reg = ph.lambda_reg;
      rep.epochs.push_back(er);

      if (!std::isfinite(epoch_loss) || !std::isfinite(vm.loss)) {
        if (++nonfinite_streak >= 5) {
          stop_reason = "aborted";
          break;
        }
      } else {
        nonfinite_streak = 0;
        if (vm.loss < best_val - 1e-12) {
          best_val = vm.loss;
          best_global = global_epoch;
          best_params = params;
          stale = 0;
        } else {
          ++stale;
        }
      }
      if (ph.scheduler == SchedulerKind::Plateau) plateau.observe(vm.loss);

      ++global_epoch;
      if (stale >= opts.patience) {
        stop_reason = "patience";
        break;
      }
      if (std::isfinite(vm.loss) && vm.r2 > opts.r2_target) {
        stop_reason = "r2_target";
        break;
      }
    }
  }
  if (stop_reason.empty()) stop_reason = "budget";

  rep.best_epoch = best_global;
  rep.best_val_loss = best_val;
  rep.stop_reason = stop_reason;
  res.best_params = best_global >= 0 ? best_params : params;
  return res;
}

GridSearchResult grid_search_cv(const GridSearchSpace& space, const Dataset& ds,
                                const NetworkConfig& base_cfg, int k,
                                std::uint64_t seed, int epochs_per_fold,
                                const std::optional<ParameterSet>& anchor,
                                const std::optional<FisherDiag>& fisher) {
  const auto folds = group_kfold(ds, k, seed);

  GridSearchResult res;
  res.best.mean_val_loss = std::numeric_limits<double>::infinity();
  for (double lr : space.learning_rates)
    for (double lp : space.lambda_ps)
      for (double lreg : space.lambda_regs)
        for (double dp : space.dropouts) {
          GridPointResult gp;
          gp.lr = lr;
          gp.lambda_p = lp;
          gp.lambda_reg = lreg;
          gp.dropout = dp;
          if (lreg > 0.0 && (!anchor || !fisher))
            throw std::invalid_argument("grid_search_cv: lambda_reg > 0 needs anchor");

          for (const auto& fold : folds) {
            const std::set<std::string> held(fold.begin(), fold.end());
            std::vector<std::size_t> train_rows, val_rows;
            for (std::size_t i = 0; i < ds.rows.size(); ++i)
              (held.count(ds.rows[i].experiment_id) ? val_rows : train_rows).push_back(i);

            std::vector<FeatureVector> feats;
            for (auto r : train_rows) feats.push_back(engineer_features(ds.rows[r]));
            const ScalerState scaler = fit_scaler(feats);
            const TrainData tr = make_train_data(ds, train_rows, scaler);
            const TrainData va = make_train_data(ds, val_rows, scaler);

            NetworkConfig cfg = base_cfg;
            cfg.dropout_p = dp;
            const Network net(cfg);
            ParameterSet params = Network::init(cfg);

            PhaseConfig ph;
            ph.phase = Phase::Finetune;  // no freeze plan inside CV
            ph.lambda_p_override = lp;
            ph.name = "cv";
            ph.base_lr = lr;
            ph.max_epochs = epochs_per_fold;
            ph.lambda_reg = lreg;
            TrainOptions opts;
            opts.patience = epochs_per_fold;
            opts.r2_target = 1.1;  // never triggers inside CV
            const auto run =
                run_curriculum(net, std::move(params), tr, va, {ph}, anchor, fisher,
                               seed, opts);
            gp.fold_losses.push_back(run.report.best_val_loss);
          }
          gp.mean_val_loss = stats::mean(gp.fold_losses);
          gp.cov = gp.fold_losses.size() > 1 && gp.mean_val_loss != 0.0
                       ? stats::stddev(gp.fold_losses) / std::fabs(gp.mean_val_loss)
                       : 0.0;
          if (gp.mean_val_loss < res.best.mean_val_loss) res.best = gp;
          res.all.push_back(gp);
        }
  return res;
}

}  // namespace pisorb
