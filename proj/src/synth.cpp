#include "pisorb/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "pisorb/loss.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

Dataset synthesize(const SynthConfig& cfg, SynthTruth* truth) {
  if (cfg.n_experiments < 1 || cfg.points_per_experiment < 2)
    throw std::invalid_argument("synthesize: bad size configuration");
  if (cfg.temperatures_K.empty())
    throw std::invalid_argument("synthesize: no temperatures");

  std::mt19937_64 rng(stats::mix_seed(cfg.seed, 0x51u));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  if (truth) {
    truth->q_max.clear();
    truth->K_ref = cfg.K_ref;
    truth->n_sips = cfg.n_sips;
  }

  Dataset ds;
  for (int e = 0; e < cfg.n_experiments; ++e) {
    const double u = unif(rng);  // latent rank variable
    // composition rank-correlated with capacity
    const double vol = 8.0 + 30.0 * u + 1.5 * gauss(rng);
    const double moist = 1.0 + 6.0 * (1.0 - u) + 0.4 * gauss(rng);
    const double ash = 8.0 + 15.0 * (1.0 - u) + 1.0 * gauss(rng);
    const double m_w = std::clamp(moist, 0.1, 12.0);
    const double a_w = std::clamp(ash, 1.0, 30.0);
    const double v_w = std::clamp(vol, 5.0, 45.0);

    const double q_max =
        cfg.q_scale * (25.0 + cfg.heterogeneity * 9.0 * (2.0 * u - 1.0));
    if (truth) truth->q_max.push_back(q_max);

    const double T =
        cfg.temperatures_K[static_cast<std::size_t>(e) % cfg.temperatures_K.size()];
    const double K = cfg.K_ref * std::exp(cfg.dH_over_R * (1.0 / T - 1.0 / cfg.T_ref));

    char id[32];
    std::snprintf(id, sizeof(id), "exp_%03d", e);
    for (int p = 0; p < cfg.points_per_experiment; ++p) {
      const double P = cfg.p_min + (cfg.p_max - cfg.p_min) * p /
                                       (cfg.points_per_experiment - 1.0);
      const double s = std::pow(K * P, cfg.n_sips);
      double q = q_max * s / (1.0 + s);
      if (cfg.noise > 0.0) q *= 1.0 + cfg.noise * gauss(rng);
      Measurement m;
      m.experiment_id = id;
      m.temperature_K = T;
      m.pressure_MPa = P;
      m.moisture_wt = m_w;
      m.ash_wt = a_w;
      m.volatile_wt = v_w;
      m.adsorption = std::max(q, 0.0);
      ds.rows.push_back(std::move(m));
    }
  }
  return ds;
}

void write_dataset_csv(const Dataset& ds, const std::string& csv_path,
                       const std::string& schema_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + csv_path);
  out << "experiment_id,temperature,pressure,moisture,ash,volatile,adsorption\n";
  out.precision(12);
  for (const auto& m : ds.rows)
    out << m.experiment_id << ',' << m.temperature_K << ',' << m.pressure_MPa << ','
        << m.moisture_wt << ',' << m.ash_wt << ',' << m.volatile_wt << ','
        << m.adsorption << '\n';
  if (!schema_path.empty()) {
    std::ofstream sch(schema_path);
    if (!sch) throw std::runtime_error("write_dataset_csv: cannot open " + schema_path);
    sch << "{\"temperature_unit\": \"K\"}\n";
  }
}

SynthConfig source_gas_preset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_experiments = 40;
  cfg.points_per_experiment = 10;
  cfg.q_scale = 0.6;
  cfg.K_ref = 1.2;
  cfg.dH_over_R = 500.0;
  cfg.n_sips = 1.1;
  cfg.noise = 0.02;
  cfg.seed = seed;
  return cfg;
}

SynthConfig target_gas_preset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_experiments = 8;  // scarce target data
  cfg.points_per_experiment = 8;
  cfg.q_scale = 1.0;
  cfg.K_ref = 0.8;
  cfg.dH_over_R = 600.0;
  cfg.n_sips = 1.3;
  cfg.noise = 0.05;
  cfg.seed = seed;
  return cfg;
}

SourceModelResult build_source_model(const Dataset& ds, const NetworkConfig& cfg,
                                     const std::vector<PhaseConfig>& phases,
                                     const TrainOptions& opts, std::uint64_t seed,
                                     const std::string& out_path) {
  const SplitResult split = group_split(ds, 0.2, seed);
  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    (split.partition[i] == 0 ? train_rows : val_rows).push_back(i);

  std::vector<FeatureVector> feats;
  for (auto r : train_rows) feats.push_back(engineer_features(ds.rows[r]));
  const ScalerState scaler = fit_scaler(feats);
  const TrainData train = make_train_data(ds, train_rows, scaler);
  const TrainData val = make_train_data(ds, val_rows, scaler);

  const Network net(cfg);
  ParameterSet params = Network::init(cfg);
  auto run = run_curriculum(net, std::move(params), train, val, phases, std::nullopt,
                            std::nullopt, seed, opts);

  const FisherDiag fisher = compute_fisher_diag(net, run.best_params, train.X);

  nlohmann::json meta;
  meta["role"] = "source_model";
  meta["seed"] = seed;
  meta["stop_reason"] = run.report.stop_reason;
  meta["best_val_loss"] = run.report.best_val_loss;
  {
    nlohmann::json sc;
    sc["median"] = std::vector<double>(scaler.median.begin(), scaler.median.end());
    sc["iqr"] = std::vector<double>(scaler.iqr.begin(), scaler.iqr.end());
    meta["scaler"] = std::move(sc);
  }
  save_model(out_path, run.best_params, cfg, meta, fisher);

  SourceModelResult res;
  res.val_loss = run.report.best_val_loss;
  res.stop_reason = run.report.stop_reason;
  if (!run.report.epochs.empty()) res.val_r2 = run.report.epochs.back().val_r2;
  return res;
}

}  // namespace pisorb
