#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "pisorb/isotherm.hpp"

using namespace pisorb;

namespace {

std::vector<FitPoint> sample_curve(const IsothermParams& p, int n, double p_lo,
                                   double p_hi, double noise = 0.0,
                                   std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<FitPoint> pts;
  for (int i = 0; i < n; ++i) {
    const double P = p_lo + (p_hi - p_lo) * i / (n - 1.0);
    double q = eval_isotherm(p, P);
    if (noise > 0.0) q *= 1.0 + noise * g(rng);
    pts.push_back({P, q, {}});
  }
  return pts;
}

}  // namespace

TEST_SUITE("isotherm") {

TEST_CASE("closed forms at reference points") {
  CHECK(eval_isotherm(IsothermParams::langmuir(22.30, 0.732), 0.0) ==
        doctest::Approx(0.0));
  CHECK(eval_isotherm(IsothermParams::freundlich(3.0, 2.0), 0.0) ==
        doctest::Approx(0.0));
  CHECK(eval_isotherm(IsothermParams::sips(30, 0.8, 2.0), 0.0) == doctest::Approx(0.0));

  CHECK(eval_isotherm(IsothermParams::langmuir(22.30, 0.732), 2.0) ==
        doctest::Approx(13.25).epsilon(0.001));
  CHECK(eval_isotherm(IsothermParams::sips(49.85, 0.060, 0.52), 2.0) ==
        doctest::Approx(12.43).epsilon(0.002));
}

TEST_CASE("sips reduces to langmuir at n = 1") {
  const auto s = IsothermParams::sips(37.0, 1.3, 1.0);
  const auto l = IsothermParams::langmuir(37.0, 1.3);
  for (double P : {0.0, 0.3, 1.0, 4.6, 9.9})
    CHECK(eval_isotherm(s, P) == doctest::Approx(eval_isotherm(l, P)).epsilon(1e-12));
}

TEST_CASE("monotone in pressure and saturating") {
  const auto s = IsothermParams::sips(40.0, 0.7, 1.8);
  double prev = -1.0;
  for (int i = 0; i <= 50; ++i) {
    const double q = eval_isotherm(s, 0.2 * i);
    CHECK(q >= prev);
    prev = q;
  }
  CHECK(eval_isotherm(s, 1e6) == doctest::Approx(40.0).epsilon(1e-3));
  CHECK(eval_isotherm(IsothermParams::langmuir(25, 0.5), 1e6) ==
        doctest::Approx(25.0).epsilon(1e-3));
}

TEST_CASE("compositional capacity scaling") {
  const auto c = IsothermParams::comp_langmuir(20.0, 0.5, 0.3, 0.2);
  Composition mid{30.0, 6.0};  // normalizers cancel to (1 + 0.3 - 0.2)
  const double base = eval_isotherm(IsothermParams::langmuir(20.0 * 1.1, 0.5), 2.0);
  CHECK(eval_isotherm(c, 2.0, mid) == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS(eval_isotherm(c, 2.0));  // composition required

  // extreme moisture drives effective capacity to the zero clamp
  Composition wet{0.0, 60.0};
  const auto heavy = IsothermParams::comp_langmuir(20.0, 0.5, 0.0, 2.0);
  CHECK(eval_isotherm(heavy, 2.0, wet) == doctest::Approx(0.0));
}

TEST_CASE("noiseless fit recovery") {
  const auto truth_l = IsothermParams::langmuir(20.0, 0.5);
  const FitResult fl = fit_isotherm(IsoKind::Langmuir, sample_curve(truth_l, 30, 0.1, 9));
  REQUIRE(fl.converged);
  CHECK(fl.params.values[0] == doctest::Approx(20.0).epsilon(0.01));
  CHECK(fl.params.values[1] == doctest::Approx(0.5).epsilon(0.01));

  const auto truth_s = IsothermParams::sips(30.0, 0.8, 2.0);
  const FitResult fs = fit_isotherm(IsoKind::Sips, sample_curve(truth_s, 40, 0.1, 9));
  REQUIRE(fs.converged);
  CHECK(fs.params.values[0] == doctest::Approx(30.0).epsilon(0.02));
  CHECK(fs.params.values[1] == doctest::Approx(0.8).epsilon(0.02));
  CHECK(fs.params.values[2] == doctest::Approx(2.0).epsilon(0.02));
  CHECK(fs.n_evaluations <= 5000);
}

TEST_CASE("noisy fit recovery within 10 percent") {
  const auto truth = IsothermParams::langmuir(20.0, 0.5);
  const FitResult f =
      fit_isotherm(IsoKind::Langmuir, sample_curve(truth, 40, 0.1, 9, 0.03, 42));
  REQUIRE(f.converged);
  CHECK(f.params.values[0] == doctest::Approx(20.0).epsilon(0.10));
  CHECK(f.params.values[1] == doctest::Approx(0.5).epsilon(0.10));
}

TEST_CASE("degenerate and invalid fit inputs") {
  std::vector<FitPoint> flat;
  for (int i = 0; i < 10; ++i) flat.push_back({0.5 + i, 7.0, {}});
  const FitResult f = fit_isotherm(IsoKind::Langmuir, flat);  // must not throw
  CHECK(f.n_evaluations <= 5000);

  std::vector<FitPoint> few{{1.0, 2.0, {}}, {2.0, 3.0, {}}};
  CHECK_THROWS(fit_isotherm(IsoKind::Sips, few));

  std::vector<FitPoint> same_p;
  for (int i = 0; i < 10; ++i) same_p.push_back({2.0, 1.0 + i, {}});
  CHECK_THROWS(fit_isotherm(IsoKind::Langmuir, same_p));
}

TEST_CASE("refitting from a converged solution is idempotent") {
  const auto truth = IsothermParams::sips(30.0, 0.8, 2.0);
  const auto pts = sample_curve(truth, 40, 0.1, 9);
  const FitResult first = fit_isotherm(IsoKind::Sips, pts);
  REQUIRE(first.converged);
  const FitResult second = fit_isotherm(IsoKind::Sips, pts, first.params);
  for (std::size_t i = 0; i < first.params.values.size(); ++i)
    CHECK(second.params.values[i] ==
          doctest::Approx(first.params.values[i]).epsilon(1e-6));
}

TEST_CASE("stratified fits by volatile content") {
  // all points in the high-rank stratum
  std::vector<FitPoint> high;
  const auto truth = IsothermParams::langmuir(26.0, 0.6);
  for (int i = 0; i < 20; ++i) {
    FitPoint p{0.3 + 0.4 * i, 0.0, {10.0, 1.0}};
    p.adsorption = eval_isotherm(truth, p.pressure_MPa);
    high.push_back(p);
  }
  const StratifiedFits one = fit_stratified(IsoKind::Langmuir, high);
  CHECK(one.high_rank.has_value());
  CHECK_FALSE(one.medium_rank.has_value());
  CHECK_FALSE(one.low_rank.has_value());
  CHECK(one.skipped.size() == 2);

  // distinct capacities recover the rank ordering
  std::vector<FitPoint> mixed;
  const double qs[3] = {26.0, 22.0, 17.0};
  const double vols[3] = {10.0, 20.0, 35.0};
  for (int s = 0; s < 3; ++s) {
    const auto t = IsothermParams::langmuir(qs[s], 0.6);
    for (int i = 0; i < 20; ++i) {
      FitPoint p{0.3 + 0.4 * i, 0.0, {vols[s], 1.0}};
      p.adsorption = eval_isotherm(t, p.pressure_MPa);
      mixed.push_back(p);
    }
  }
  const StratifiedFits st = fit_stratified(IsoKind::Langmuir, mixed);
  REQUIRE(st.high_rank.has_value());
  REQUIRE(st.medium_rank.has_value());
  REQUIRE(st.low_rank.has_value());
  CHECK(st.high_rank->params.values[0] > st.medium_rank->params.values[0]);
  CHECK(st.medium_rank->params.values[0] > st.low_rank->params.values[0]);

  // volatile exactly 15 belongs to the medium stratum
  std::vector<FitPoint> edge;
  for (int i = 0; i < 10; ++i) {
    FitPoint p{0.5 + i, 0.0, {15.0, 1.0}};
    p.adsorption = eval_isotherm(truth, p.pressure_MPa);
    edge.push_back(p);
  }
  const StratifiedFits eb = fit_stratified(IsoKind::Langmuir, edge);
  CHECK_FALSE(eb.high_rank.has_value());
  CHECK(eb.medium_rank.has_value());
}

TEST_CASE("three-model ensemble variance") {
  const auto truth = IsothermParams::langmuir(20.0, 0.5);
  const auto pts = sample_curve(truth, 30, 0.1, 9);
  const FitResult fl = fit_isotherm(IsoKind::Langmuir, pts);
  const FitResult ff = fit_isotherm(IsoKind::Freundlich, pts);
  const FitResult fs = fit_isotherm(IsoKind::Sips, pts);
  REQUIRE(fl.converged);
  REQUIRE(ff.converged);
  REQUIRE(fs.converged);

  const EnsemblePrediction at_zero = ensemble_predict(fl, ff, fs, 0.0);
  CHECK(at_zero.mean == doctest::Approx(0.0));
  CHECK(at_zero.structural_variance == doctest::Approx(0.0));

  const EnsemblePrediction mid = ensemble_predict(fl, ff, fs, 3.0);
  const double pl = eval_isotherm(fl.params, 3.0);
  const double pf = eval_isotherm(ff.params, 3.0);
  const double ps = eval_isotherm(fs.params, 3.0);
  const double mean = (pl + pf + ps) / 3.0;
  const double var = ((pl - mean) * (pl - mean) + (pf - mean) * (pf - mean) +
                      (ps - mean) * (ps - mean)) /
                     3.0;
  CHECK(mid.mean == doctest::Approx(mean));
  CHECK(mid.structural_variance == doctest::Approx(var));

  FitResult bad = ff;
  bad.converged = false;
  CHECK_THROWS(ensemble_predict(fl, bad, fs, 3.0));
}

TEST_CASE("fit json round trip") {
  const auto truth = IsothermParams::sips(30.0, 0.8, 2.0);
  const FitResult f = fit_isotherm(IsoKind::Sips, sample_curve(truth, 40, 0.1, 9));
  const FitResult back = fit_from_json(fit_to_json(f));
  CHECK(back.params.kind == f.params.kind);
  REQUIRE(back.params.values.size() == f.params.values.size());
  for (std::size_t i = 0; i < f.params.values.size(); ++i)
    CHECK(back.params.values[i] == doctest::Approx(f.params.values[i]));
  CHECK(back.converged == f.converged);
  CHECK(back.r2 == doctest::Approx(f.r2));
}

}  // TEST_SUITE
