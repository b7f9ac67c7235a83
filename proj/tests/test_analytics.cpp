#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "prlab/analytics.hpp"
#include "prlab/normal_dist.hpp"
#include "prlab/stats.hpp"

namespace {

using namespace prlab;

// ---------------------------------------------------------------------------
// stats

TEST(Stats, MeanAndStddev) {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_NEAR(stddev(v), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(stddev(std::vector<double>{7.0}), 0.0);
  EXPECT_THROW(mean(std::vector<double>{}), InvalidParameter);
}

TEST(Stats, KolmogorovSurvivalKnownValues) {
  // Textbook critical values of the Kolmogorov distribution.
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 2e-4);
  EXPECT_NEAR(kolmogorov_survival(1.2238), 0.10, 2e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 2e-4);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
  EXPECT_NEAR(kolmogorov_survival(0.2), 1.0, 1e-12);
  EXPECT_LT(kolmogorov_survival(4.0), 1e-12);
}

TEST(Stats, KolmogorovSurvivalBranchesAgree) {
  // Both series converge at the switch point; evaluate each side of it.
  const double below = kolmogorov_survival(1.18 - 1e-12);
  const double above = kolmogorov_survival(1.18 + 1e-12);
  EXPECT_NEAR(below, above, 1e-10);
  double prev = 1.0;
  for (double l = 0.05; l < 3.0; l += 0.01) {
    const double q = kolmogorov_survival(l);
    EXPECT_LE(q, prev + 1e-15) << l;
    prev = q;
  }
}

TEST(Stats, KsAllZeroSampleAgainstStandardNormal) {
  const std::vector<double> zeros(50, 0.0);
  const KsResult r = ks_statistic(zeros, [](double t) { return normal_cdf(t); });
  EXPECT_DOUBLE_EQ(r.statistic, 0.5);
}

TEST(Stats, KsSingleValue) {
  const KsResult r = ks_statistic(std::vector<double>{0.3}, [](double t) { return normal_cdf(t); });
  EXPECT_NEAR(r.statistic, std::max(normal_cdf(0.3), 1.0 - normal_cdf(0.3)), 1e-15);
  EXPECT_TRUE(std::isfinite(r.pvalue));
}

TEST(Stats, KsEmptySampleThrows) {
  EXPECT_THROW(ks_statistic(std::vector<double>{}, [](double t) { return t; }), InvalidParameter);
}

TEST(Stats, KsStatisticInUnitInterval) {
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + rng.below(40));
    const double shift = 4.0 * rng.normal();
    for (double& v : s) v = shift + rng.normal();
    const KsResult r = ks_statistic(s, [](double t) { return normal_cdf(t); });
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_LE(r.statistic, 1.0);
    EXPECT_GE(r.pvalue, 0.0);
    EXPECT_LE(r.pvalue, 1.0);
  }
}

TEST(Stats, KsNullPvaluesRarelySmall) {
  int passing = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(resolve_seeds(seed, "ks-null"));
    std::vector<double> s(10000);
    for (double& v : s) v = rng.normal();
    if (ks_statistic(s, [](double t) { return normal_cdf(t); }).pvalue > 0.01) ++passing;
  }
  EXPECT_GE(passing, 95);
}

TEST(Stats, KsDetectsShift) {
  CounterRng rng(5);
  std::vector<double> s(2000);
  for (double& v : s) v = 0.3 + rng.normal();
  EXPECT_LT(ks_statistic(s, [](double t) { return normal_cdf(t); }).pvalue, 1e-6);
}

TEST(Stats, PearsonAndSpearman) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {2, 4, 6, 8, 10};
  const std::vector<double> c = {1, 4, 9, 16, 25};
  const std::vector<double> d = {5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(pearson(a, b), 1.0);
  EXPECT_LT(pearson(a, c), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, d), -1.0);
  EXPECT_THROW(pearson(a, std::vector<double>{1, 1, 1, 1, 1}), InvalidParameter);
  EXPECT_THROW(pearson(a, std::vector<double>{1, 2}), InvalidParameter);
}

TEST(Stats, RanksAverageTies) {
  const auto r = ranks(std::vector<double>{3.0, 1.0, 3.0, 2.0});
  EXPECT_EQ(r, (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
}

// ---------------------------------------------------------------------------
// conditional MSE

TEST(ConditionalMse, ClosedFormIdentities) {
  for (double s : {0.1, 0.5, 1.0, 2.0, 7.0}) {
    const GaussianToyModel m(s);
    const double v = 1.0 + s * s;
    for (double y : {-3.0, -0.5, 0.0, 1.0, 2.0, 3.0}) {
      const double mmse = conditional_mse_closed(EstimatorKind::Mmse, m, y);
      EXPECT_NEAR(conditional_mse_closed(EstimatorKind::PosteriorSamplerRef, m, y), 2.0 * mmse, 1e-12);
      const double c = (std::sqrt(v) - 1.0) / v;
      const double excess = conditional_mse_closed(EstimatorKind::Dmax, m, y) - mmse;
      EXPECT_NEAR(excess, c * c * y * y, 1e-12);
      EXPECT_GE(excess, 0.0);
      EXPECT_EQ(excess == 0.0, y == 0.0);
    }
  }
}

TEST(ConditionalMse, ClosedFormRejectsOtherKinds) {
  const GaussianToyModel m(1.0);
  EXPECT_THROW(conditional_mse_closed(EstimatorKind::Zigzag, m, 0.0), InvalidParameter);
}

TEST(ConditionalMse, MonteCarloMatchesClosedForm) {
  for (double s : {0.5, 1.0, 2.0}) {
    const GaussianToyModel m(s);
    const Estimator estimators[] = {make_mmse(m), make_dmax(m), make_posterior_sampler(m, 9)};
    for (double y : {0.0, 1.0, 2.0, 3.0}) {
      for (const auto& e : estimators) {
        const McEstimate mc = conditional_mse_mc(e, m, y, 100000, 17);
        const double closed = conditional_mse_closed(e.kind(), m, y);
        EXPECT_LE(std::abs(mc.value - closed), 3.0 * mc.standard_error)
            << to_string(e.kind()) << " sigma " << s << " y " << y;
      }
    }
  }
}

TEST(ConditionalMse, SingleDrawIsFinite) {
  const GaussianToyModel m(1.0);
  const McEstimate mc = conditional_mse_mc(make_mmse(m), m, 0.5, 1, 0);
  EXPECT_TRUE(std::isfinite(mc.value));
  EXPECT_THROW(conditional_mse_mc(make_mmse(m), m, 0.5, 0, 0), InvalidParameter);
}

TEST(ConditionalMse, DmaxDominatesMmse) {
  const GaussianToyModel m(1.0);
  for (double y : {-2.0, -1.0, 0.0, 0.5, 1.5, 3.0}) {
    const McEstimate d = conditional_mse_mc(make_dmax(m), m, y, 20000, 1);
    const McEstimate a = conditional_mse_mc(make_mmse(m), m, y, 20000, 1);
    EXPECT_GE(d.value, a.value - 3.0 * a.standard_error) << y;
  }
}

TEST(ConditionalMse, ReproducibleForSeed) {
  const GaussianToyModel m(2.0);
  const auto e = make_posterior_sampler(m, 4);
  EXPECT_EQ(conditional_mse_mc(e, m, 1.0, 1000, 8).value, conditional_mse_mc(e, m, 1.0, 1000, 8).value);
}

// ---------------------------------------------------------------------------
// residual diagnostics

TEST(Residuals, PosteriorSamplerLooksLikeNoise) {
  const GaussianToyModel m(1.0);
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = residual_diagnostics(make_posterior_sampler(m, seed), m, 10000, seed);
    if (r.ks_pvalue > 0.01 && std::abs(r.pearson_corr) < 0.05) ++ok;
  }
  EXPECT_GE(ok, 4);
}

TEST(Residuals, LinearEstimatorsFullyCorrelated) {
  for (double s : {0.5, 1.0, 2.0}) {
    const GaussianToyModel m(s);
    EXPECT_NEAR(residual_diagnostics(make_mmse(m), m, 1000, 3).pearson_corr, 1.0, 1e-9);
    EXPECT_NEAR(residual_diagnostics(make_dmax(m), m, 1000, 3).pearson_corr, 1.0, 1e-9);
  }
}

TEST(Residuals, MmseResidualIsNotNoiseDistributed) {
  // y - E[X|Y] has variance (1 + s^2) s^4 / (1 + s^2)^2, not s^2.
  const GaussianToyModel m(1.0);
  EXPECT_LT(residual_diagnostics(make_mmse(m), m, 10000, 0).ks_pvalue, 1e-6);
}

TEST(Residuals, RequiresHundredDraws) {
  const GaussianToyModel m(1.0);
  EXPECT_THROW(residual_diagnostics(make_mmse(m), m, 99, 0), InvalidParameter);
}

// ---------------------------------------------------------------------------
// tradeoff sweep

TEST(Sweep, EmptyGridThrows) {
  const GaussianToyModel m(1.0);
  EXPECT_THROW(tradeoff_sweep(ZigzagSweep{{}}, m), InvalidParameter);
  EXPECT_THROW(tradeoff_sweep(LambdaSweep{{}, {}}, m), InvalidParameter);
  SweepOptions o;
  o.seeds.clear();
  EXPECT_THROW(tradeoff_sweep(ZigzagSweep{{1.0}}, m, o), InvalidParameter);
}

TEST(Sweep, ZigzagTrendsAlongGrid) {
  const GaussianToyModel m(1.0);
  SweepOptions o;
  o.n_metric = 1000;
  o.n_probe = 500;
  const auto r = tradeoff_sweep(ZigzagSweep{{1.0, 0.5, 0.25}}, m, o);
  ASSERT_EQ(r.cells.size(), 3u);
  ASSERT_EQ(r.aggregated.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_LT(r.cells[i].point.jemd, r.cells[i - 1].point.jemd);
    EXPECT_GT(r.cells[i].point.kbar, r.cells[i - 1].point.kbar);
  }
  const auto trend = sweep_trend(r);
  EXPECT_DOUBLE_EQ(trend.spearman_jemd, 1.0);   // control is delta: larger delta, larger JEMD
  EXPECT_DOUBLE_EQ(trend.spearman_kbar, -1.0);
}

TEST(Sweep, PureFunctionOfInputs) {
  const GaussianToyModel m(1.0);
  SweepOptions o;
  o.n_metric = 300;
  o.n_probe = 200;
  o.seeds = {4, 5};
  const ZigzagSweep fam{{0.5, 0.125}};
  const auto a = tradeoff_sweep(fam, m, o);
  o.threads = 3;
  const auto b = tradeoff_sweep(fam, m, o);
  std::ostringstream sa;
  std::ostringstream sb;
  write_sweep_csv(sa, a);
  write_sweep_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Sweep, AggregatesSeeds) {
  const GaussianToyModel m(1.0);
  SweepOptions o;
  o.n_metric = 200;
  o.n_probe = 100;
  o.seeds = {1, 2, 3};
  const auto r = tradeoff_sweep(ZigzagSweep{{0.5}}, m, o);
  ASSERT_EQ(r.cells.size(), 3u);
  std::vector<double> j;
  for (const auto& c : r.cells) j.push_back(c.point.jemd);
  EXPECT_DOUBLE_EQ(r.aggregated[0].point.jemd, mean(j));
  EXPECT_DOUBLE_EQ(r.aggregated[0].point.auxiliary.at("jemd_sd"), stddev(j));
  EXPECT_EQ(r.aggregated[0].status, "ok");
}

TEST(Sweep, DivergedCellIsFlaggedAndSweepContinues) {
  const GaussianToyModel m(1.0);
  LambdaSweep fam;
  fam.lambdas = {0.0, 1.0};
  fam.train.steps = 50;
  fam.train.train_samples = 256;
  fam.train.lr = 1e60;
  SweepOptions o;
  o.n_metric = 100;
  o.n_probe = 50;
  const auto r = tradeoff_sweep(fam, m, o);
  ASSERT_EQ(r.cells.size(), 2u);
  for (const auto& c : r.cells) EXPECT_EQ(c.status.rfind("diverged at step", 0), 0u) << c.status;
  EXPECT_EQ(r.aggregated[0].status, "failed");
  EXPECT_THROW(sweep_trend(r), InvalidParameter);
}

TEST(Sweep, LambdaCellsRecordMmseBaseline) {
  const GaussianToyModel m(1.0);
  LambdaSweep fam;
  fam.lambdas = {0.0};
  fam.train.steps = 20;
  fam.train.train_samples = 256;
  SweepOptions o;
  o.n_metric = 100;
  o.n_probe = 50;
  const auto r = tradeoff_sweep(fam, m, o);
  ASSERT_EQ(r.cells[0].status, "ok");
  EXPECT_NEAR(r.cells[0].point.auxiliary.at("jemd_mmse"), jemd(make_mmse(m), m, 100, resolve_seeds(0, "sweep/eval"), o.jemd),
              1e-15);
}

TEST(Sweep, CsvLayout) {
  const GaussianToyModel m(1.0);
  SweepOptions o;
  o.n_metric = 50;
  o.n_probe = 20;
  o.seeds = {0, 1};
  const auto r = tradeoff_sweep(ZigzagSweep{{1.0, 0.5}}, m, o);
  std::ostringstream os;
  write_sweep_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "family,control,seed,jemd,kbar,jemd_sd,kbar_sd,status");
  int rows = 0;
  int means = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("zigzag,", 0), 0u);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    if (line.find(",mean,") != std::string::npos) ++means;
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(means, 2);
  EXPECT_EQ(os.str().find('\r'), std::string::npos);
}

}  // namespace
