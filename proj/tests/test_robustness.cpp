#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "prlab/estimator.hpp"
#include "prlab/random.hpp"
#include "prlab/robustness.hpp"

using namespace prlab;

namespace {

const GaussianToyModel kToy(1.0);

AttackConfig attack(double alpha, std::size_t steps) {
  AttackConfig c;
  c.alpha = alpha;
  c.steps = steps;
  return c;
}

}  // namespace

TEST(KRatio, LinearAndDmax) {
  CounterRng rng(1);
  for (double a : {0.3, -1.7, 2.0}) {
    DenseLayer L(1, 1);
    L.w(0, 0) = a;
    const Estimator lin = make_trained_mlp(MlpParams({L}));
    for (int i = 0; i < 100; ++i) {
      const double y1 = rng.normal();
      const double y2 = y1 + rng.normal();
      EXPECT_NEAR(k_ratio(lin, y1, y2), std::abs(a), 1e-12 * std::abs(a));
    }
  }
  EXPECT_NEAR(k_ratio(make_dmax(kToy), 0.3, 1.1), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(k_ratio(make_mmse(kToy), 0.4, 0.4), InvalidParameter);
  EXPECT_THROW(k_ratio(make_posterior_sampler(kToy, 1), 0.1, 0.2), ContractViolation);
}

TEST(KRatio, ZigzagWithinBinSlope) {
  // Pairs spanning a whole bin see the full quantile sweep, about 4.37 over
  // delta. Interior chords are flatter (about 7.6 at the bin centre).
  const double delta = 0.25;
  const Estimator z = make_zigzag(kToy, delta);
  CounterRng rng(2);
  double sum = 0.0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const double k = std::floor(4.0 * rng.normal());
    const double lo = k * delta + 1e-9 * rng.uniform();
    const double hi = (k + 1.0) * delta - 1e-9 * (1.0 + rng.uniform());
    sum += k_ratio(z, lo, hi);
  }
  EXPECT_NEAR(sum / n, 4.37 / delta, 0.3 * 4.37 / delta);
}

TEST(KbarRandom, LinearEstimatorsAreExact) {
  EXPECT_NEAR(kbar_random(make_mmse(kToy), kToy, 1000, 0.2, 3), 0.5, 1e-12);
  EXPECT_NEAR(kbar_random(make_dmax(kToy), kToy, 1000, 0.2, 3), 1.0 / std::sqrt(2.0), 1e-12);
  for (double sigma : {0.5, 2.0}) {
    const GaussianToyModel m(sigma);
    EXPECT_NEAR(kbar_random(make_mmse(m), m, 500, 0.2, 1), 1.0 / (1.0 + sigma * sigma), 1e-12);
  }
}

TEST(KbarRandom, ContractsAndReproducibility) {
  EXPECT_THROW(kbar_random(make_posterior_sampler(kToy, 1), kToy, 10, 0.2, 1), ContractViolation);
  EXPECT_THROW(kbar_random(make_mmse(kToy), kToy, 0, 0.2, 1), InvalidParameter);
  EXPECT_THROW(kbar_random(make_mmse(kToy), kToy, 10, 0.0, 1), InvalidParameter);
  const Estimator z = make_zigzag(kToy, 0.5);
  EXPECT_EQ(kbar_random(z, kToy, 300, 0.2, 9), kbar_random(z, kToy, 300, 0.2, 9));
  EXPECT_NE(kbar_random(z, kToy, 300, 0.2, 9), kbar_random(z, kToy, 300, 0.2, 10));
}

TEST(KbarRandom, BelowAnalyticLipschitzConstant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LE(kbar_random(make_mmse(kToy), kToy, 200, 0.2, seed), 0.5 + 1e-12);
    EXPECT_LE(kbar_random(make_dmax(kToy), kToy, 200, 0.2, seed), 1.0 / std::sqrt(2.0) + 1e-12);
  }
}

TEST(KbarRandom, ZigzagScalesInverselyWithDelta) {
  // The 1/delta scaling holds for perturbations small against the bin, so the
  // probe standard deviation is 0.05. Bin crossings make the ratio heavy
  // tailed; five seeds are pooled.
  double k_half = 0.0;
  double k_quarter = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    k_half += kbar_random(make_zigzag(kToy, 0.5), kToy, 1000, 0.0025, seed);
    k_quarter += kbar_random(make_zigzag(kToy, 0.25), kToy, 1000, 0.0025, seed);
  }
  EXPECT_NEAR(k_quarter / k_half, 2.0, 0.5);
}

TEST(Ifgsm, LinearMovesFullRadius) {
  for (std::size_t T : {1u, 3u, 10u, 150u}) {
    const AttackConfig c = attack(0.1, T);
    for (double y : {-2.0, 0.0, 0.37}) {
      EXPECT_NEAR(ifgsm(make_mmse(kToy), y, c), y + 0.1, 1e-15);
      EXPECT_NEAR(ifgsm(make_dmax(kToy), y, c), y + 0.1, 1e-15);
    }
  }
  // Decreasing maps ascend the other way once the output moves.
  DenseLayer L(1, 1);
  L.w(0, 0) = -2.0;
  const Estimator neg = make_trained_mlp(MlpParams({L}));
  EXPECT_NEAR(ifgsm(neg, 1.0, attack(0.1, 10)), 1.1, 1e-15);
}

TEST(Ifgsm, StaysInsideBall) {
  CounterRng rng(5);
  const std::vector<Estimator> es = {make_zigzag(kToy, 0.05), make_zigzag(kToy, 0.25), make_mmse(kToy),
                                     make_trained_mlp(init_mlp(MlpArchitecture::generator(), 3))};
  for (const auto& e : es) {
    for (int i = 0; i < 200; ++i) {
      const double alpha = 0.001 + 0.3 * rng.uniform();
      const auto T = static_cast<std::size_t>(1 + rng.below(30));
      const double y = 2.0 * rng.normal();
      EXPECT_LE(std::abs(ifgsm(e, y, attack(alpha, T)) - y), alpha + 1e-12);
    }
  }
  EXPECT_THROW(ifgsm(make_posterior_sampler(kToy, 1), 0.0, attack(0.1, 1)), ContractViolation);
  EXPECT_THROW(ifgsm(make_mmse(kToy), 0.0, attack(0.0, 1)), InvalidParameter);
  EXPECT_THROW(ifgsm(make_mmse(kToy), 0.0, attack(0.1, 0)), InvalidParameter);
}

TEST(Ifgsm, MultiDimensionalBall) {
  CounterRng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Estimator e = make_trained_mlp(gradcheck::random_mlp(rng, 3, 2, 4, 8));
    const auto y = gradcheck::gaussian_vector(rng, 3);
    const AttackConfig c = attack(0.05, 1 + rng.below(20));
    const auto y_adv = ifgsm(e, y, c);
    ASSERT_EQ(y_adv.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(std::abs(y_adv[k] - y[k]), c.alpha + 1e-12);
  }
}

TEST(Ifgsm, ZigzagAttackBeatsRandomProbing) {
  // 200 trials at the default budget: the attacked ratio must reach the ratio
  // of a random +-alpha probe in at least 80% of them. Ratios equal to 1e-9
  // relative count as reaching it.
  const Estimator z = make_zigzag(kToy, 0.25);
  const AttackConfig c;
  CounterRng rng(resolve_seeds(7, "attack-vs-random"));
  int wins = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    const double y = std::sqrt(2.0) * rng.normal();
    const double y_rand = y + (rng.uniform() < 0.5 ? -c.alpha : c.alpha);
    const double y_adv = ifgsm(z, y, c);
    const double k_adv = y_adv == y ? 0.0 : k_ratio(z, y, y_adv);
    const double k_rand = k_ratio(z, y, y_rand);
    if (k_adv >= k_rand * (1.0 - 1e-9)) ++wins;
  }
  RecordProperty("wins", wins);
  std::printf("attack >= random on %d / %d trials\n", wins, trials);
  EXPECT_GE(wins, 160);
}

TEST(KbarIfgsm, LinearIsExact) {
  EXPECT_NEAR(kbar_ifgsm(make_mmse(kToy), kToy, 500, AttackConfig{}), 0.5, 1e-12);
  EXPECT_NEAR(kbar_ifgsm(make_dmax(kToy), kToy, 500, attack(0.1, 10)), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(kbar_ifgsm(make_mmse(kToy), kToy, 0, AttackConfig{}), InvalidParameter);
  EXPECT_THROW(kbar_ifgsm(make_posterior_sampler(kToy, 2), kToy, 5, AttackConfig{}), ContractViolation);
}

TEST(KbarIfgsm, DominatesRandomProbingOnZigzag) {
  // Matched scale: random perturbations have standard deviation alpha.
  for (double delta : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
    const Estimator z = make_zigzag(kToy, delta);
    AttackConfig c = attack(0.1, 10);
    c.seed = 11;
    const KbarEstimate adv = kbar_ifgsm_detail(z, kToy, 1000, c);
    const double rnd = kbar_random(z, kToy, 1000, 0.01, 11);
    EXPECT_GE(adv.kbar, rnd) << "delta " << delta;
    EXPECT_LT(adv.degenerate, adv.n);
  }
}

TEST(KbarIfgsm, Reproducible) {
  const Estimator z = make_zigzag(kToy, 0.25);
  AttackConfig c = attack(0.1, 10);
  c.seed = 3;
  const auto a = kbar_ifgsm_detail(z, kToy, 300, c);
  const auto b = kbar_ifgsm_detail(z, kToy, 300, c);
  EXPECT_EQ(a.kbar, b.kbar);
  EXPECT_EQ(a.degenerate, b.degenerate);
}

TEST(Fps, SingleSampleIsTheEstimate) {
  const Estimator z = make_zigzag(kToy, 0.05);
  for (double y : {-1.3, 0.0, 0.77}) {
    const auto s = fps_explore(z, y, 1, attack(0.1, 150));
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].output[0], z(y));
    EXPECT_EQ(s[0].y_adv[0], y);
    EXPECT_EQ(output_spread(s), 0.0);
  }
  EXPECT_THROW(fps_explore(z, 0.0, 0, attack(0.1, 10)), InvalidParameter);
  EXPECT_THROW(fps_explore(make_posterior_sampler(kToy, 1), 0.0, 3, attack(0.1, 10)), ContractViolation);
}

TEST(Fps, FirstSampleBitExactAndBallRespected) {
  CounterRng rng(8);
  for (FpsLoss mode : {FpsLoss::Mean, FpsLoss::LastOnly}) {
    AttackConfig c = attack(0.1, 150);
    c.fps_loss = mode;
    for (int i = 0; i < 10; ++i) {
      const double y = rng.normal();
      const auto s = fps_explore(make_zigzag(kToy, 0.05), y, 5, c);
      ASSERT_EQ(s.size(), 5u);
      EXPECT_EQ(s[0].output[0], make_zigzag(kToy, 0.05)(y));
      for (const auto& p : s) EXPECT_LE(std::abs(p.y_adv[0] - y), c.alpha + 1e-12);
    }
  }
}

TEST(Fps, MmseSpreadBoundedByBall) {
  CounterRng rng(9);
  for (int i = 0; i < 20; ++i) {
    const double y = rng.normal();
    const auto s = fps_explore(make_mmse(kToy), y, 5, attack(0.1, 150));
    EXPECT_LE(output_spread(s), 2.0 * 0.5 * 0.1 + 1e-12);
  }
}

TEST(Fps, ZigzagSpreadsAcrossThePosterior) {
  const auto s = fps_explore(make_zigzag(kToy, 0.05), 0.0, 5, attack(0.1, 150));
  const double spread = output_spread(s);
  EXPECT_GE(spread, 1.0);
}
