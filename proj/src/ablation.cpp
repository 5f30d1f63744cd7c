#include "pisorb/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

Metrics evaluate_metrics(const Vector& predictions, const Vector& targets) {
  const Eigen::Index n = targets.size();
  if (n == 0 || predictions.size() != n)
    throw std::invalid_argument("evaluate_metrics: empty or misaligned vectors");

  Metrics m;
  double ss_res = 0.0, abs_sum = 0.0;
  const double ybar = targets.mean();
  double ss_tot = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = targets[i] - predictions[i];
    ss_res += r * r;
    abs_sum += std::fabs(r);
    ss_tot += (targets[i] - ybar) * (targets[i] - ybar);
    m.maxae = std::max(m.maxae, std::fabs(r));
  }
  m.rmse = std::sqrt(ss_res / static_cast<double>(n));
  m.mae = abs_sum / static_cast<double>(n);
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - ss_res / ss_tot;
  } else {
    m.r2_defined = false;
    m.r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("cohens_d: each sample needs >= 2 values");
  const double ma = stats::mean(a), mb = stats::mean(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = stats::variance(a), vb = stats::variance(b);
  const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
  if (pooled <= 0.0) {
    if (ma == mb) return 0.0;
    return ma < mb ? -std::numeric_limits<double>::infinity()
                   : std::numeric_limits<double>::infinity();
  }
  return (ma - mb) / std::sqrt(pooled);
}

TTestResult bootstrap_paired_ttest(const std::vector<double>& errors_a,
                                   const std::vector<double>& errors_b,
                                   int n_boot, std::uint64_t seed) {
  const std::size_t n = errors_a.size();
  if (errors_b.size() != n)
    throw std::invalid_argument("bootstrap_paired_ttest: length mismatch");
  if (n < 10) throw std::invalid_argument("bootstrap_paired_ttest: need >= 10 pairs");

  std::mt19937_64 rng(stats::mix_seed(seed, 0x7eb7uLL));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  double t_sum = 0.0;
  for (int b = 0; b < n_boot; ++b) {
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      diff[i] = errors_a[j] * errors_a[j] - errors_b[j] * errors_b[j];
    }
    const double md = stats::mean(diff);
    const double sd = stats::stddev(diff);
    double t;
    if (sd > 0.0)
      t = md / (sd / std::sqrt(static_cast<double>(n)));
    else
      t = md == 0.0 ? 0.0 : std::copysign(1e6, md);
    t_sum += t;
  }
  TTestResult res;
  res.t = t_sum / n_boot;
  res.p = stats::t_pvalue_two_sided(res.t, static_cast<double>(n - 1));
  return res;
}

VariantSpec VariantSpec::transfer() { return {VariantKind::Transfer, "transfer", 1, 0}; }
VariantSpec VariantSpec::random_random() {
  return {VariantKind::RandomRandom, "random_random", 1, 0};
}
VariantSpec VariantSpec::random_classical() {
  return {VariantKind::RandomClassical, "random_classical", 1, 0};
}
VariantSpec VariantSpec::ensemble(VariantKind kind, int k, int top_m) {
  VariantSpec v;
  v.kind = kind;
  v.k = k;
  v.top_m = top_m;
  switch (kind) {
    case VariantKind::EnsembleStandard: v.tag = "ensemble_standard"; break;
    case VariantKind::EnsembleDiverse: v.tag = "ensemble_diverse"; break;
    case VariantKind::EnsembleWeighted: v.tag = "ensemble_weighted"; break;
    default: throw std::invalid_argument("ensemble(): non-ensemble kind");
  }
  return v;
}

namespace {

struct MemberRun {
  Vector predictions;  // test set, log1p
  double val_loss = 0.0;
  bool aborted = false;
  int convergence_epoch = -1;
  std::string stop_reason;
};

int convergence_epoch_from(const CurriculumReport& rep) {
  if (rep.epochs.empty()) return -1;
  const double final_r2 = rep.epochs.back().val_r2;
  if (!(final_r2 > 0.0)) return -1;
  const double target = 0.95 * final_r2;
  for (const auto& e : rep.epochs)
    if (e.val_r2 >= target) return e.epoch;
  return -1;
}

MemberRun train_member(const TrainData& train, const TrainData& val,
                       const TrainData& test, const AblationConfig& cfg,
                       const NetworkConfig& net_cfg, VariantKind kind,
                       std::uint64_t member_seed) {
  const Network net(net_cfg);
  ParameterSet params;
  std::optional<ParameterSet> anchor;
  std::optional<FisherDiag> fisher;

  if (kind == VariantKind::Transfer) {
    if (cfg.source_model.empty())
      throw std::invalid_argument("run_ablation: transfer variant needs source_model");
    TransferResult tr = transfer_weights(net_cfg, cfg.source_model);
    params = std::move(tr.params);
    if (cfg.use_ewc && !tr.fisher.empty()) {
      anchor = params;
      fisher = std::move(tr.fisher);
    }
    if (cfg.sips_fit) init_physics_head_from_sips(params, *cfg.sips_fit);
  } else {
    NetworkConfig seeded = net_cfg;
    seeded.seed = member_seed;
    params = Network::init(seeded);
    if (kind == VariantKind::RandomClassical) {
      if (!cfg.sips_fit)
        throw std::invalid_argument("run_ablation: random_classical needs sips_fit");
      init_physics_head_from_sips(params, *cfg.sips_fit);
    }
  }

  std::vector<PhaseConfig> phases = cfg.phases;
  if (!fisher)
    for (auto& ph : phases) ph.lambda_reg = 0.0;  // no source anchor to pull toward
  if (kind != VariantKind::Transfer)
    for (auto& ph : phases)
      if (ph.phase == Phase::Warmup) ph.phase = Phase::Finetune;  // nothing to freeze

  auto run = run_curriculum(net, std::move(params), train, val, phases, anchor,
                            fisher, member_seed, cfg.train);

  MemberRun out;
  out.aborted = run.report.stop_reason == "aborted";
  out.stop_reason = run.report.stop_reason;
  out.val_loss = run.report.best_val_loss;
  out.convergence_epoch = convergence_epoch_from(run.report);
  out.predictions = predict(net, run.best_params, test.X).mean;
  return out;
}

NetworkConfig jitter_config(const NetworkConfig& base, std::mt19937_64& rng) {
  NetworkConfig cfg = base;
  std::uniform_real_distribution<double> width_scale(0.75, 2.5);
  std::uniform_real_distribution<double> dropout(0.05, 0.25);
  const double ws = width_scale(rng);
  for (auto& w : cfg.hidden_widths)
    w = std::max(4, static_cast<int>(std::lround(w * ws)));
  cfg.dropout_p = dropout(rng);
  return cfg;
}

}  // namespace

AblationReport run_ablation(const TrainData& train, const TrainData& val,
                            const TrainData& test, const AblationConfig& cfg,
                            const std::vector<VariantSpec>& variants,
                            std::uint64_t seed) {
  AblationReport rep;

  for (const auto& spec : variants) {
    const bool is_ensemble = spec.kind == VariantKind::EnsembleStandard ||
                             spec.kind == VariantKind::EnsembleDiverse ||
                             spec.kind == VariantKind::EnsembleWeighted;
    if (is_ensemble && spec.k < 2)
      throw std::invalid_argument("run_ablation: ensembles need k >= 2");

    VariantResult vr;
    vr.tag = spec.tag;
    const int k = is_ensemble ? spec.k : 1;
    std::mt19937_64 jitter_rng(stats::mix_seed(seed, 0xd1ce));
    std::uniform_real_distribution<double> lr_scale(0.5, 2.0);

    std::vector<MemberRun> members;
    for (int m = 0; m < k; ++m) {
      NetworkConfig net_cfg = cfg.net;
      AblationConfig mcfg = cfg;
      if (spec.kind == VariantKind::EnsembleDiverse) {
        net_cfg = jitter_config(cfg.net, jitter_rng);
        const double ls = lr_scale(jitter_rng);
        for (auto& ph : mcfg.phases) ph.base_lr *= ls;
      }
      const std::uint64_t ms =
          stats::mix_seed(seed, 100 + (spec.identical_members ? 0 : m));
      const VariantKind member_kind =
          is_ensemble ? VariantKind::RandomRandom : spec.kind;
      members.push_back(
          train_member(train, val, test, mcfg, net_cfg, member_kind, ms));
      if (members.back().aborted) vr.incomplete = true;
    }

    // combine member predictions
    const Eigen::Index nt = test.y.size();
    Vector combined = Vector::Zero(nt);
    if (spec.kind == VariantKind::EnsembleWeighted) {
      int top_m = spec.top_m > 0 ? spec.top_m : std::max(1, spec.k / 2);
      top_m = std::min(top_m, spec.k);
      std::vector<int> order(k);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return members[a].val_loss < members[b].val_loss;
      });
      double wsum = 0.0;
      for (int i = 0; i < top_m; ++i) {
        const double w = 1.0 / std::max(members[order[i]].val_loss, 1e-12);
        combined += w * members[order[i]].predictions;
        wsum += w;
      }
      combined /= wsum;
    } else {
      for (const auto& m : members) combined += m.predictions;
      combined /= static_cast<double>(k);
    }
    vr.predictions = combined;

    if (k > 1) {
      double spread = 0.0;
      for (Eigen::Index i = 0; i < nt; ++i) {
        std::vector<double> vals;
        vals.reserve(k);
        for (const auto& m : members) vals.push_back(m.predictions[i]);
        spread += stats::stddev(vals);
      }
      vr.member_spread = spread / static_cast<double>(nt);
    }
    for (const auto& m : members) vr.member_val_losses.push_back(m.val_loss);
    vr.stop_reason = members.front().stop_reason;
    if (!is_ensemble) vr.convergence_epoch = members.front().convergence_epoch;

    vr.log_space = evaluate_metrics(combined, test.y);
    Vector pred_orig(nt), targ_orig(nt);
    for (Eigen::Index i = 0; i < nt; ++i) {
      pred_orig[i] = std::expm1(combined[i]);
      targ_orig[i] = std::expm1(test.y[i]);
    }
    vr.original_units = evaluate_metrics(pred_orig, targ_orig);
    rep.variants.push_back(std::move(vr));
  }

  // all pairwise comparisons on absolute log-space errors
  for (std::size_t a = 0; a < rep.variants.size(); ++a)
    for (std::size_t b = a + 1; b < rep.variants.size(); ++b) {
      const Eigen::Index nt = test.y.size();
      std::vector<double> ea(nt), eb(nt);
      for (Eigen::Index i = 0; i < nt; ++i) {
        ea[i] = std::fabs(rep.variants[a].predictions[i] - test.y[i]);
        eb[i] = std::fabs(rep.variants[b].predictions[i] - test.y[i]);
      }
      PairwiseTest pt;
      pt.tag_a = rep.variants[a].tag;
      pt.tag_b = rep.variants[b].tag;
      const auto tt = bootstrap_paired_ttest(ea, eb, 100, stats::mix_seed(seed, a * 64 + b));
      pt.t = tt.t;
      pt.p = tt.p;
      pt.d = cohens_d(ea, eb);
      pt.significant = pt.p < kBonferroniAlpha;
      rep.tests.push_back(std::move(pt));
    }
  return rep;
}

std::string AblationReport::to_json() const {
  json j;
  json vars = json::array();
  for (const auto& v : variants) {
    json e;
    e["variant"] = v.tag;
    e["log_space"] = {{"r2", v.log_space.r2_defined ? json(v.log_space.r2) : json()},
                      {"rmse", v.log_space.rmse},
                      {"mae", v.log_space.mae},
                      {"maxae", v.log_space.maxae}};
    e["original_units"] = {
        {"r2", v.original_units.r2_defined ? json(v.original_units.r2) : json()},
        {"rmse", v.original_units.rmse},
        {"mae", v.original_units.mae},
        {"maxae", v.original_units.maxae}};
    e["incomplete"] = v.incomplete;
    e["stop_reason"] = v.stop_reason;
    e["convergence_epoch"] = v.convergence_epoch;
    e["member_val_losses"] = v.member_val_losses;
    e["member_spread"] = v.member_spread;
    vars.push_back(std::move(e));
  }
  j["variants"] = std::move(vars);

  json test_rows = json::array();
  for (const auto& t : tests) {
    json e;
    e["pair"] = {t.tag_a, t.tag_b};
    e["t"] = t.t;
    e["p"] = t.p;
    e["cohens_d"] = std::isfinite(t.d) ? json(t.d) : json(t.d > 0 ? "inf" : "-inf");
    e["significant"] = t.significant;
    test_rows.push_back(std::move(e));
  }
  j["pairwise_tests"] = std::move(test_rows);
  j["alpha"] = kBonferroniAlpha;
  j["bootstrap"] = {{"iterations", 100},
                    {"aggregation", "mean resampled t, p from t-distribution"}};
  return j.dump(2);
}

}  // namespace pisorb
