#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pisorb/ablation.hpp"
#include "pisorb/dataset.hpp"
#include "pisorb/explain.hpp"
#include "pisorb/isotherm.hpp"
#include "pisorb/loss.hpp"
#include "pisorb/stats.hpp"
#include "pisorb/synth.hpp"
#include "pisorb/trainer.hpp"
#include "pisorb/transfer.hpp"
#include "pisorb/uq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pisorb;

namespace {

constexpr const char* kVersion = "1.0.0";

// exit codes
constexpr int kOk = 0;
constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kNumericalAbort = 3;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void write_artifact_stamp(const fs::path& dir, const json& resolved) {
  fs::create_directories(dir);
  write_text(dir / "resolved_config.json", resolved.dump(2));
  json v;
  v["pisorb"] = kVersion;
  v["model_format_version"] = 1;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
               std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["compiler"] = __VERSION__;
  write_text(dir / "versions.json", v.dump(2));
}

Dataset load_data(const std::string& data_path, const std::string& schema_path,
                  json* report_out = nullptr) {
  try {
    CsvSchema schema;
    if (!schema_path.empty()) schema = load_schema(schema_path);
    LoadReport rep = load_dataset(data_path, schema);
    if (report_out) {
      (*report_out)["rejected_missing"] = rep.rejected_missing;
      (*report_out)["rejected_duplicate"] = rep.rejected_duplicate;
      (*report_out)["rejected_invalid"] = rep.rejected_invalid;
      (*report_out)["messages"] = rep.messages;
      (*report_out)["rows"] = rep.data.rows.size();
    }
    return std::move(rep.data);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

SplitResult make_or_load_split(const Dataset& ds, const std::string& split_file,
                               double test_fraction, std::uint64_t seed) {
  if (!split_file.empty()) {
    std::ifstream in(split_file);
    if (!in) throw DataError("cannot read split file " + split_file);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return split_from_json(text, ds);
  }
  return group_split(ds, test_fraction, seed);
}

struct Partitions {
  std::vector<std::size_t> train, val, test;
};

// carve a validation set out of the training experiments, group-aware
Partitions partition_rows(const Dataset& ds, const SplitResult& split,
                          std::uint64_t seed) {
  Partitions p;
  Dataset train_ds;
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    if (split.partition[i] == 1) {
      p.test.push_back(i);
    } else {
      train_rows.push_back(i);
      train_ds.rows.push_back(ds.rows[i]);
    }
  }
  const SplitResult inner = group_split(train_ds, 0.25, stats::mix_seed(seed, 0xa1));
  for (std::size_t j = 0; j < train_rows.size(); ++j)
    (inner.partition[j] == 1 ? p.val : p.train).push_back(train_rows[j]);
  return p;
}

std::vector<FitPoint> fit_points(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<FitPoint> pts;
  pts.reserve(rows.size());
  for (auto r : rows) {
    const auto& m = ds.rows[r];
    pts.push_back({m.pressure_MPa, m.adsorption, {m.volatile_wt, m.moisture_wt}});
  }
  return pts;
}

ScalerState scaler_from_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<FeatureVector> feats;
  feats.reserve(rows.size());
  for (auto r : rows) feats.push_back(engineer_features(ds.rows[r]));
  return fit_scaler(feats);
}

json scaler_to_json(const ScalerState& s) {
  json j;
  j["median"] = std::vector<double>(s.median.begin(), s.median.end());
  j["iqr"] = std::vector<double>(s.iqr.begin(), s.iqr.end());
  return j;
}

ScalerState scaler_from_model_meta(const json& meta) {
  if (!meta.contains("scaler"))
    throw DataError("model file carries no scaler metadata");
  ScalerState s;
  const auto med = meta["scaler"]["median"].get<std::vector<double>>();
  const auto iqr = meta["scaler"]["iqr"].get<std::vector<double>>();
  if (med.size() != kNumFeatures || iqr.size() != kNumFeatures)
    throw DataError("model scaler metadata has wrong length");
  std::copy(med.begin(), med.end(), s.median.begin());
  std::copy(iqr.begin(), iqr.end(), s.iqr.begin());
  return s;
}

Matrix scaled_matrix(const Dataset& ds, const std::vector<std::size_t>& rows,
                     const ScalerState& scaler) {
  Matrix X(rows.size(), kNumFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const FeatureVector z = transform(engineer_features(ds.rows[rows[i]]), scaler);
    for (int j = 0; j < kNumFeatures; ++j) X(i, j) = z[j];
  }
  return X;
}

std::vector<PhaseConfig> curriculum_from(int warmup, int finetune, int full) {
  auto phases = PhaseConfig::default_curriculum();
  phases[0].max_epochs = warmup;
  phases[1].max_epochs = finetune;
  phases[2].max_epochs = full;
  return phases;
}

json metrics_to_json(const Metrics& m) {
  json j;
  j["r2"] = m.r2_defined ? json(m.r2) : json();
  j["rmse"] = m.rmse;
  j["mae"] = m.mae;
  j["maxae"] = m.maxae;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_split(const std::string& data, const std::string& schema,
              double test_fraction, std::uint64_t seed, const std::string& out) {
  json load_rep;
  const Dataset ds = load_data(data, schema, &load_rep);
  const SplitResult split = group_split(ds, test_fraction, seed);
  const BalanceReport bal = verify_balance(split, ds);
  const OutlierReport outliers = screen_outliers(ds);

  json resolved{{"command", "split"}, {"data", data}, {"schema", schema},
                {"test_fraction", test_fraction}, {"seed", seed}};
  write_artifact_stamp(out, resolved);
  write_text(fs::path(out) / "split.json", split_to_json(split));

  json rep;
  rep["load"] = load_rep;
  json feats = json::array();
  for (const auto& f : bal.features)
    feats.push_back({{"feature", f.feature},
                     {"ks", f.ks},
                     {"p_value", f.p_value},
                     {"cohens_d", f.cohens_d}});
  rep["balance"] = std::move(feats);
  rep["rank_proportion_train"] = bal.rank_proportion_train;
  rep["rank_proportion_test"] = bal.rank_proportion_test;
  rep["rank_proportion_deviation"] = bal.rank_proportion_deviation;
  json ofl = json::array();
  for (const auto& f : outliers.flags)
    ofl.push_back({{"row", f.row}, {"variable", f.variable}, {"value", f.value}});
  rep["outliers"] = {{"sufficient", outliers.sufficient}, {"flags", std::move(ofl)}};
  write_text(fs::path(out) / "balance_report.json", rep.dump(2));
  return kOk;
}

int cmd_fit_isotherms(const std::string& data, const std::string& schema,
                      const std::string& out, bool stratified, bool compositional) {
  const Dataset ds = load_data(data, schema);
  std::vector<std::size_t> rows(ds.rows.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto pts = fit_points(ds, rows);

  json resolved{{"command", "fit-isotherms"}, {"data", data}, {"schema", schema},
                {"stratified", stratified}, {"compositional", compositional}};
  write_artifact_stamp(out, resolved);

  json fits;
  const FitResult lang = fit_isotherm(IsoKind::Langmuir, pts);
  const FitResult freu = fit_isotherm(IsoKind::Freundlich, pts);
  const FitResult sips = fit_isotherm(IsoKind::Sips, pts);
  fits["langmuir"] = json::parse(fit_to_json(lang));
  fits["freundlich"] = json::parse(fit_to_json(freu));
  fits["sips"] = json::parse(fit_to_json(sips));
  if (compositional) {
    fits["comp_langmuir"] = json::parse(fit_to_json(fit_isotherm(IsoKind::CompLangmuir, pts)));
    fits["comp_sips"] = json::parse(fit_to_json(fit_isotherm(IsoKind::CompSips, pts)));
  }
  if (stratified) {
    const StratifiedFits st = fit_stratified(IsoKind::Sips, pts);
    json s;
    if (st.high_rank) s["high_rank"] = json::parse(fit_to_json(*st.high_rank));
    if (st.medium_rank) s["medium_rank"] = json::parse(fit_to_json(*st.medium_rank));
    if (st.low_rank) s["low_rank"] = json::parse(fit_to_json(*st.low_rank));
    s["skipped"] = st.skipped;
    fits["stratified_sips"] = std::move(s);
  }
  write_text(fs::path(out) / "fits.json", fits.dump(2));

  if (lang.converged && freu.converged && sips.converged) {
    std::ostringstream curve;
    curve << "pressure_MPa,ensemble_mean,structural_variance\n";
    for (int i = 0; i <= 100; ++i) {
      const double P = 10.0 * i / 100.0;
      const EnsemblePrediction ep = ensemble_predict(lang, freu, sips, P);
      curve << P << ',' << ep.mean << ',' << ep.structural_variance << '\n';
    }
    write_text(fs::path(out) / "ensemble_curve.csv", curve.str());
  }
  return kOk;
}

int cmd_synthesize(const std::string& preset, int experiments, int points,
                   double noise, double heterogeneity, std::uint64_t seed,
                   bool train_source, const std::string& out) {
  SynthConfig cfg;
  if (preset == "source")
    cfg = source_gas_preset(seed);
  else if (preset == "target")
    cfg = target_gas_preset(seed);
  else
    cfg.seed = seed;
  if (experiments > 0) cfg.n_experiments = experiments;
  if (points > 0) cfg.points_per_experiment = points;
  if (noise >= 0.0) cfg.noise = noise;
  if (heterogeneity >= 0.0) cfg.heterogeneity = heterogeneity;

  json resolved{{"command", "synthesize"}, {"preset", preset},
                {"n_experiments", cfg.n_experiments},
                {"points_per_experiment", cfg.points_per_experiment},
                {"noise", cfg.noise}, {"heterogeneity", cfg.heterogeneity},
                {"q_scale", cfg.q_scale}, {"K_ref", cfg.K_ref},
                {"dH_over_R", cfg.dH_over_R}, {"n_sips", cfg.n_sips},
                {"seed", seed}, {"train_source_model", train_source}};
  write_artifact_stamp(out, resolved);

  SynthTruth truth;
  const Dataset ds = synthesize(cfg, &truth);
  write_dataset_csv(ds, (fs::path(out) / "data.csv").string(),
                    (fs::path(out) / "schema.json").string());
  json tj{{"K_ref", truth.K_ref}, {"n_sips", truth.n_sips}, {"q_max", truth.q_max}};
  write_text(fs::path(out) / "truth.json", tj.dump(2));

  if (train_source) {
    NetworkConfig net_cfg;
    net_cfg.seed = seed;
    const auto phases = curriculum_from(60, 60, 40);
    TrainOptions opts;
    opts.max_total_epochs = 160;
    const SourceModelResult src = build_source_model(
        ds, net_cfg, phases, opts, seed, (fs::path(out) / "source_model.json").string());
    if (src.stop_reason == "aborted") {
      std::cerr << "source model training aborted on non-finite losses\n";
      return kNumericalAbort;
    }
    json sj{{"val_r2", src.val_r2}, {"val_loss", src.val_loss},
            {"stop_reason", src.stop_reason}};
    write_text(fs::path(out) / "source_model_summary.json", sj.dump(2));
  }
  return kOk;
}

int cmd_train(const std::string& data, const std::string& schema,
              const std::string& split_file, double test_fraction,
              const std::string& variant, const std::string& source_model,
              std::uint64_t seed, int warmup, int finetune, int full,
              const std::string& out) {
  const Dataset ds = load_data(data, schema);
  const SplitResult split = make_or_load_split(ds, split_file, test_fraction, seed);
  const Partitions parts = partition_rows(ds, split, seed);
  if (parts.train.empty() || parts.val.empty() || parts.test.empty())
    throw DataError("a partition came out empty; need more experiments");

  const ScalerState scaler = scaler_from_rows(ds, parts.train);
  const TrainData train = make_train_data(ds, parts.train, scaler);
  const TrainData val = make_train_data(ds, parts.val, scaler);
  const TrainData test = make_train_data(ds, parts.test, scaler);

  NetworkConfig net_cfg;
  net_cfg.seed = seed;
  const Network net(net_cfg);
  auto phases = curriculum_from(warmup, finetune, full);

  ParameterSet params;
  std::optional<ParameterSet> anchor;
  std::optional<FisherDiag> fisher;

  std::optional<FitResult> sips_fit;
  if (variant != "random-random") {
    FitResult f = fit_isotherm(IsoKind::Sips, fit_points(ds, parts.train));
    if (f.converged) sips_fit = std::move(f);
  }

  std::string transfer_manifest;
  if (variant == "transfer") {
    TransferResult tr = transfer_weights(net_cfg, source_model);
    params = std::move(tr.params);
    if (!tr.fisher.empty()) {
      anchor = params;
      fisher = std::move(tr.fisher);
    }
    if (sips_fit) init_physics_head_from_sips(params, *sips_fit);
    transfer_manifest = tr.manifest.to_json();
  } else {
    params = Network::init(net_cfg);
    if (variant == "random-classical") {
      if (!sips_fit) throw DataError("classical head init needs a converged Sips fit");
      init_physics_head_from_sips(params, *sips_fit);
    }
  }
  if (!fisher)
    for (auto& ph : phases) ph.lambda_reg = 0.0;
  if (variant != "transfer")
    for (auto& ph : phases)
      if (ph.phase == Phase::Warmup) ph.phase = Phase::Finetune;  // nothing frozen

  json resolved{{"command", "train"}, {"data", data}, {"schema", schema},
                {"split", split_file}, {"test_fraction", test_fraction},
                {"variant", variant}, {"source_model", source_model},
                {"seed", seed},
                {"epochs", {warmup, finetune, full}}};
  write_artifact_stamp(out, resolved);
  write_text(fs::path(out) / "split.json", split_to_json(split));
  if (!transfer_manifest.empty())
    write_text(fs::path(out) / "transfer_manifest.json", transfer_manifest);

  TrainOptions opts;
  opts.max_total_epochs = warmup + finetune + full;
  auto run = run_curriculum(net, std::move(params), train, val, phases, anchor,
                            fisher, seed, opts);

  write_text(fs::path(out) / "history.jsonl", run.report.to_jsonl());
  write_text(fs::path(out) / "summary.json", run.report.summary_json());

  json meta{{"variant", variant}, {"seed", seed},
            {"stop_reason", run.report.stop_reason},
            {"best_val_loss", run.report.best_val_loss}};
  meta["scaler"] = scaler_to_json(scaler);
  const FisherDiag own_fisher = compute_fisher_diag(net, run.best_params, train.X);
  save_model((fs::path(out) / "model.json").string(), run.best_params, net_cfg, meta,
             own_fisher);

  const Vector pred = predict(net, run.best_params, test.X).mean;
  json metrics;
  metrics["test_log_space"] = metrics_to_json(evaluate_metrics(pred, test.y));
  Vector po(pred.size()), to(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    po[i] = std::expm1(pred[i]);
    to[i] = std::expm1(test.y[i]);
  }
  metrics["test_original_units"] = metrics_to_json(evaluate_metrics(po, to));
  write_text(fs::path(out) / "test_metrics.json", metrics.dump(2));

  if (run.report.stop_reason == "aborted") {
    std::cerr << "training aborted on repeated non-finite epochs\n";
    return kNumericalAbort;
  }
  return kOk;
}

int cmd_uq(const std::string& model_path, const std::string& data,
           const std::string& schema, const std::string& split_file,
           double test_fraction, int n_mc, std::uint64_t seed,
           const std::string& out) {
  const Dataset ds = load_data(data, schema);
  ModelFile model = [&] {
    try {
      return load_model(model_path);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }();
  const ScalerState scaler = scaler_from_model_meta(model.metadata);
  const Network net(model.config);

  const SplitResult split = make_or_load_split(ds, split_file, test_fraction, seed);
  const Partitions parts = partition_rows(ds, split, seed);

  auto targets_of = [&](const std::vector<std::size_t>& rows) {
    Vector y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      y[i] = transform_target(ds.rows[rows[i]].adsorption);
    return y;
  };

  // fit tau on validation, apply once to the held-out test partition
  const Matrix Xval = scaled_matrix(ds, parts.val, scaler);
  const Matrix Xtest = scaled_matrix(ds, parts.test, scaler);
  PredictiveDistribution val_pred =
      propagate_joint(mc_dropout_predict(net, model.params, Xval, n_mc, seed));
  const double tau = fit_temperature(val_pred, targets_of(parts.val));
  PredictiveDistribution test_pred = propagate_joint(
      mc_dropout_predict(net, model.params, Xtest, n_mc, stats::mix_seed(seed, 1)));
  test_pred.tau = tau;
  const CalibrationReport calib = calibration_metrics(test_pred, targets_of(parts.test));

  json resolved{{"command", "uq"}, {"model", model_path}, {"data", data},
                {"schema", schema}, {"split", split_file}, {"n_mc", n_mc},
                {"seed", seed}};
  write_artifact_stamp(out, resolved);
  write_text(fs::path(out) / "uq_report.json", uq_report_json(test_pred, calib));

  // reliability diagram data for external plotting
  std::ostringstream rel;
  rel << "nominal,empirical\n";
  for (int l = 0; l < 4; ++l) rel << kNominal[l] << ',' << calib.coverage[l] << '\n';
  write_text(fs::path(out) / "reliability.csv", rel.str());
  return kOk;
}

int cmd_explain(const std::string& model_path, const std::string& data,
                const std::string& schema, const std::string& split_file,
                double test_fraction, int n_background, int n_coalitions,
                bool exact, std::uint64_t seed, const std::string& out) {
  const Dataset ds = load_data(data, schema);
  ModelFile model = [&] {
    try {
      return load_model(model_path);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }();
  const ScalerState scaler = scaler_from_model_meta(model.metadata);
  const Network net(model.config);
  const PredictFn f = make_predictor(net, model.params);

  const SplitResult split = make_or_load_split(ds, split_file, test_fraction, seed);
  const Partitions parts = partition_rows(ds, split, seed);
  std::vector<std::size_t> train_rows = parts.train;
  train_rows.insert(train_rows.end(), parts.val.begin(), parts.val.end());

  Matrix background = scaled_matrix(ds, train_rows, scaler);
  if (background.rows() > n_background)
    background = background.topRows(n_background).eval();
  const Matrix X_explain = scaled_matrix(ds, parts.test, scaler);

  json resolved{{"command", "explain"}, {"model", model_path}, {"data", data},
                {"schema", schema}, {"split", split_file},
                {"background", n_background}, {"coalitions", n_coalitions},
                {"exact", exact}, {"seed", seed}};
  write_artifact_stamp(out, resolved);

  const ShapMatrix shap =
      kernel_shap(f, X_explain, background, n_coalitions, seed, exact);
  const ShapSummary summary = shap_summary(shap);

  Matrix all_feats = scaled_matrix(ds, train_rows, scaler);
  std::vector<AleCurve> curves;
  Vector ranges(kNumFeatures);
  for (int j = 0; j < kNumFeatures; ++j) {
    curves.push_back(ale_curve(f, all_feats, j));
    ranges[j] = curves.back().range;
  }
  const VifResult vif = compute_vif(all_feats);
  const AgreementReport agreement =
      shap_ale_agreement(summary.importance, ranges, vif.vif);

  std::vector<std::string> names(feature_names().begin(), feature_names().end());
  write_text(fs::path(out) / "explanation.json",
             explanation_bundle_json(shap, summary, curves, agreement, names));
  return kOk;
}

int cmd_ablate(const std::string& data, const std::string& schema,
               const std::string& split_file, double test_fraction,
               const std::string& source_model, int ensemble_k,
               std::uint64_t seed, int warmup, int finetune, int full,
               const std::string& out) {
  const Dataset ds = load_data(data, schema);
  const SplitResult split = make_or_load_split(ds, split_file, test_fraction, seed);
  const Partitions parts = partition_rows(ds, split, seed);
  if (parts.train.empty() || parts.val.empty() || parts.test.empty())
    throw DataError("a partition came out empty; need more experiments");

  const ScalerState scaler = scaler_from_rows(ds, parts.train);
  const TrainData train = make_train_data(ds, parts.train, scaler);
  const TrainData val = make_train_data(ds, parts.val, scaler);
  const TrainData test = make_train_data(ds, parts.test, scaler);

  AblationConfig cfg;
  cfg.net.seed = seed;
  cfg.phases = curriculum_from(warmup, finetune, full);
  cfg.train.max_total_epochs = warmup + finetune + full;
  cfg.source_model = source_model;
  FitResult sips = fit_isotherm(IsoKind::Sips, fit_points(ds, parts.train));
  if (sips.converged) cfg.sips_fit = std::move(sips);

  std::vector<VariantSpec> variants{VariantSpec::transfer(),
                                    VariantSpec::random_random(),
                                    VariantSpec::random_classical(),
                                    VariantSpec::ensemble(VariantKind::EnsembleStandard,
                                                          ensemble_k)};

  json resolved{{"command", "ablate"}, {"data", data}, {"schema", schema},
                {"split", split_file}, {"source_model", source_model},
                {"ensemble_k", ensemble_k}, {"seed", seed},
                {"epochs", {warmup, finetune, full}}};
  write_artifact_stamp(out, resolved);

  const AblationReport rep = run_ablation(train, val, test, cfg, variants, seed);
  write_text(fs::path(out) / "ablation_report.json", rep.to_json());
  for (const auto& v : rep.variants)
    if (v.incomplete) {
      std::cerr << "variant " << v.tag << " aborted on non-finite losses\n";
      return kNumericalAbort;
    }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("PISORB_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"pisorb: physics-informed transfer learning for gas sorption"};
  app.require_subcommand(1);

  std::string data, schema, out = "pisorb_out", split_file, model_path;
  std::string variant = "random-random", source_model, preset = "none";
  double test_fraction = 0.2, noise = -1.0, heterogeneity = -1.0;
  std::uint64_t seed = 0;
  int experiments = 0, points = 0, n_mc = 100, n_background = 100, n_coalitions = 100;
  int ensemble_k = 4, warmup = 80, finetune = 60, full = 40;
  bool stratified = false, compositional = false, exact = false, train_source = false;

  auto add_data_opts = [&](CLI::App* c) {
    c->add_option("--data", data, "input CSV")->required();
    c->add_option("--schema", schema, "schema sidecar JSON");
    c->add_option("--out", out, "output directory");
  };

  auto* sp = app.add_subcommand("split", "group-aware split with balance audit");
  add_data_opts(sp);
  sp->add_option("--test-fraction", test_fraction);
  sp->add_option("--seed", seed);

  auto* fi = app.add_subcommand("fit-isotherms", "classical isotherm fits");
  add_data_opts(fi);
  fi->add_flag("--stratified", stratified, "add rank-stratified Sips fits");
  fi->add_flag("--compositional", compositional, "add compositional variants");

  auto* sy = app.add_subcommand("synthesize", "generate a synthetic dataset");
  sy->add_option("--out", out, "output directory");
  sy->add_option("--preset", preset)->check(CLI::IsMember({"none", "source", "target"}));
  sy->add_option("--experiments", experiments);
  sy->add_option("--points", points);
  sy->add_option("--noise", noise);
  sy->add_option("--heterogeneity", heterogeneity);
  sy->add_option("--seed", seed);
  sy->add_flag("--train-source-model", train_source,
               "also train and save a desk-scale source model");

  auto* tr = app.add_subcommand("train", "three-phase curriculum training");
  add_data_opts(tr);
  tr->add_option("--split", split_file, "split JSON from a previous run");
  tr->add_option("--test-fraction", test_fraction);
  tr->add_option("--variant", variant)
      ->check(CLI::IsMember({"transfer", "random-random", "random-classical"}));
  tr->add_option("--source-model", source_model);
  tr->add_option("--seed", seed);
  tr->add_option("--warmup-epochs", warmup);
  tr->add_option("--finetune-epochs", finetune);
  tr->add_option("--full-epochs", full);

  auto* uq = app.add_subcommand("uq", "MC Dropout + calibration");
  add_data_opts(uq);
  uq->add_option("--model", model_path, "trained model file")->required();
  uq->add_option("--split", split_file);
  uq->add_option("--test-fraction", test_fraction);
  uq->add_option("--n-mc", n_mc);
  uq->add_option("--seed", seed);

  auto* ex = app.add_subcommand("explain", "SHAP + ALE bundle");
  add_data_opts(ex);
  ex->add_option("--model", model_path, "trained model file")->required();
  ex->add_option("--split", split_file);
  ex->add_option("--test-fraction", test_fraction);
  ex->add_option("--background", n_background);
  ex->add_option("--coalitions", n_coalitions);
  ex->add_flag("--exact", exact, "enumerate all coalitions");
  ex->add_option("--seed", seed);

  auto* ab = app.add_subcommand("ablate", "four-variant ablation harness");
  add_data_opts(ab);
  ab->add_option("--split", split_file);
  ab->add_option("--test-fraction", test_fraction);
  ab->add_option("--source-model", source_model);
  ab->add_option("--ensemble-k", ensemble_k);
  ab->add_option("--seed", seed);
  ab->add_option("--warmup-epochs", warmup);
  ab->add_option("--finetune-epochs", finetune);
  ab->add_option("--full-epochs", full);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageError;
  }

  try {
    if (sp->parsed()) return cmd_split(data, schema, test_fraction, seed, out);
    if (fi->parsed()) return cmd_fit_isotherms(data, schema, out, stratified, compositional);
    if (sy->parsed())
      return cmd_synthesize(preset, experiments, points, noise, heterogeneity, seed,
                            train_source, out);
    if (tr->parsed()) {
      if (variant == "transfer" && source_model.empty()) {
        std::cerr << "--variant transfer requires --source-model\n";
        return kUsageError;
      }
      return cmd_train(data, schema, split_file, test_fraction, variant, source_model,
                       seed, warmup, finetune, full, out);
    }
    if (uq->parsed())
      return cmd_uq(model_path, data, schema, split_file, test_fraction, n_mc, seed, out);
    if (ex->parsed())
      return cmd_explain(model_path, data, schema, split_file, test_fraction,
                         n_background, n_coalitions, exact, seed, out);
    if (ab->parsed()) {
      if (source_model.empty()) {
        std::cerr << "ablate requires --source-model for the transfer variant\n";
        return kUsageError;
      }
      return cmd_ablate(data, schema, split_file, test_fraction, source_model,
                        ensemble_k, seed, warmup, finetune, full, out);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalAbort;
  }
  return kUsageError;
}
