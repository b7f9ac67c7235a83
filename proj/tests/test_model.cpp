#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prlab/model.hpp"
#include "prlab/random.hpp"

using namespace prlab;

TEST(GaussianToy, CovarianceAndPosterior) {
  const GaussianToyModel m = gaussian_toy(1.0);
  const Eigen::Matrix2d c = m.covariance();
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(0, 1), 1.0);
  EXPECT_EQ(c(1, 0), 1.0);
  EXPECT_EQ(c(1, 1), 2.0);
  EXPECT_TRUE(m.mean().isZero());

  const auto p0 = posterior_params(m, 0.0);
  EXPECT_EQ(p0.mean, 0.0);
  EXPECT_DOUBLE_EQ(p0.variance, 0.5);
  const auto p2 = posterior_params(m, 2.0);
  EXPECT_DOUBLE_EQ(p2.mean, 1.0);
  EXPECT_DOUBLE_EQ(p2.variance, 0.5);

  const auto q = posterior_params(gaussian_toy(2.0), 5.0);
  EXPECT_DOUBLE_EQ(q.mean, 1.0);
  EXPECT_DOUBLE_EQ(q.variance, 0.8);
  const auto r = posterior_params(gaussian_toy(3.0), 10.0);
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.variance, 0.9);
}

TEST(GaussianToy, RejectsInvertibleOrInvalidNoise) {
  EXPECT_THROW(gaussian_toy(0.0), InvalidParameter);
  EXPECT_THROW(gaussian_toy(-1.0), InvalidParameter);
  EXPECT_THROW(gaussian_toy(std::nan("")), InvalidParameter);
}

TEST(GaussianToy, PosteriorVarianceConstantAndPositive) {
  CounterRng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double s = 0.05 + 5.0 * rng.uniform();
    const GaussianToyModel m(s);
    const double v = m.posterior(0.0).variance;
    EXPECT_GT(v, 0.0);
    for (double y : {-10.0, -1.0, 0.3, 7.0}) EXPECT_EQ(m.posterior(y).variance, v);
    EXPECT_GT(m.covariance().determinant(), 0.0);
  }
}

TEST(SampleJoint, DeterministicPerSeed) {
  const GaussianToyModel m(1.0);
  const auto a = sample_joint(m, 1000, 42);
  const auto b = sample_joint(m, 1000, 42);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(sample_joint(m, 1000, 43).x, a.x);
  EXPECT_THROW(sample_joint(m, 0, 1), InvalidParameter);
}

TEST(SampleJoint, MomentsMatchClosedForm) {
  const std::size_t n = 100000;
  for (double s : {0.5, 1.0, 2.0}) {
    const GaussianToyModel m(s);
    const auto d = sample_joint(m, n, 7);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += d.x[i];
      my += d.y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0, m4y = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vx += (d.x[i] - mx) * (d.x[i] - mx);
      vy += (d.y[i] - my) * (d.y[i] - my);
      cxy += (d.x[i] - mx) * (d.y[i] - my);
      m4y += std::pow(d.y[i] - my, 4);
    }
    vx /= n - 1;
    vy /= n - 1;
    cxy /= n - 1;
    m4y /= n;
    const double var_y = 1.0 + s * s;
    EXPECT_NEAR(my, 0.0, 3.0 * std::sqrt(var_y / n));
    EXPECT_NEAR(mx, 0.0, 3.0 * std::sqrt(1.0 / n));
    // Var of the sample variance: (mu4 - sigma^4) / n.
    EXPECT_NEAR(vy, var_y, 3.0 * std::sqrt((m4y - vy * vy) / n));
    const double rho = 1.0 / std::sqrt(var_y);
    const double corr = cxy / std::sqrt(vx * vy);
    // Asymptotic SE of a sample correlation: (1 - rho^2) / sqrt(n).
    EXPECT_NEAR(corr, rho, 3.0 * (1.0 - rho * rho) / std::sqrt(static_cast<double>(n)));
  }
}

TEST(SampleJoint, CsvExport) {
  const auto d = sample_joint(GaussianToyModel(1.0), 3, 1);
  std::ostringstream os;
  write_csv(os, d);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "x,y");
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(std::getline(is, line));
    const auto comma = line.find(',');
    EXPECT_EQ(std::stod(line.substr(0, comma)), d.x[i]);
    EXPECT_EQ(std::stod(line.substr(comma + 1)), d.y[i]);
  }
  EXPECT_FALSE(std::getline(is, line));
}

TEST(DiscreteModel, UniformTwoByTwo) {
  const auto m = discrete_model({0, 1}, {0, 1}, {{0.25, 0.25}, {0.25, 0.25}});
  EXPECT_EQ(m.y_marginal(), (std::vector<double>{0.5, 0.5}));
  EXPECT_FALSE(m.invertible());
  EXPECT_EQ(discrete_posterior(m, 0), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(discrete_posterior(m, 1), (std::vector<double>{0.5, 0.5}));
}

TEST(DiscreteModel, Validation) {
  EXPECT_THROW(discrete_model({0, 1}, {0, 1}, {{0.25, 0.25}, {0.25, 0.15}}), InvalidParameter);
  EXPECT_THROW(discrete_model({0, 1}, {0, 1}, {{0.5, 0.5}, {0.25, -0.25}}), InvalidParameter);
  EXPECT_THROW(discrete_model({0, 0}, {0, 1}, {{0.25, 0.25}, {0.25, 0.25}}), InvalidParameter);
  EXPECT_THROW(discrete_model({1, 0}, {0, 1}, {{0.25, 0.25}, {0.25, 0.25}}), InvalidParameter);
  EXPECT_THROW(discrete_model({0, 1}, {0, 1}, {{0.5, 0.5}}), InvalidParameter);
}

TEST(DiscreteModel, DiagonalIsInvertible) {
  const auto m = discrete_model({0, 1}, {0, 1}, {{0.5, 0.0}, {0.0, 0.5}});
  EXPECT_TRUE(m.invertible());
  EXPECT_EQ(discrete_posterior(m, 0), (std::vector<double>{1.0, 0.0}));
}

TEST(DiscreteModel, PosteriorNormalizesColumn) {
  const auto m = discrete_model({0, 1}, {0, 1}, {{0.4, 0.1}, {0.1, 0.4}});
  const auto p = discrete_posterior(m, 0);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
}

TEST(DiscreteModel, ZeroMarginalColumnIsUndefined) {
  const auto m = discrete_model({0, 1}, {0, 1, 2}, {{0.5, 0.0, 0.0}, {0.25, 0.25, 0.0}});
  EXPECT_THROW(discrete_posterior(m, 2), UndefinedPosterior);
  EXPECT_THROW(discrete_posterior(m, 3), InvalidParameter);
}

TEST(DiscreteModel, RandomPosteriorsSumToOne) {
  CounterRng rng(9);
  for (int t = 0; t < 50; ++t) {
    const std::size_t nx = 1 + rng.below(5);
    const std::size_t ny = 1 + rng.below(5);
    std::vector<std::vector<double>> pmf(nx, std::vector<double>(ny));
    double total = 0;
    for (auto& row : pmf)
      for (double& v : row) total += v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    if (total == 0) continue;
    for (auto& row : pmf)
      for (double& v : row) v /= total;
    std::vector<double> xs(nx), ys(ny);
    for (std::size_t i = 0; i < nx; ++i) xs[i] = static_cast<double>(i);
    for (std::size_t j = 0; j < ny; ++j) ys[j] = static_cast<double>(j);
    double s = 0;
    for (auto& row : pmf)
      for (double v : row) s += v;
    if (std::abs(s - 1.0) > 1e-12) continue;
    const auto m = discrete_model(xs, ys, pmf);
    for (std::size_t j = 0; j < ny; ++j) {
      if (m.y_marginal()[j] == 0.0) continue;
      double c = 0;
      for (double v : discrete_posterior(m, j)) c += v;
      EXPECT_NEAR(c, 1.0, 1e-12);
    }
  }
}

TEST(Seeds, ResolveIsStableAndSpreads) {
  EXPECT_EQ(resolve_seeds(7, "a/b"), resolve_seeds(7, "a/b"));
  EXPECT_NE(resolve_seeds(7, "a/b"), resolve_seeds(8, "a/b"));
  EXPECT_NE(resolve_seeds(7, "a/b"), resolve_seeds(7, "a/c"));
}

TEST(Seeds, NoCollisionsOnAMillionPaths) {
  std::vector<std::uint64_t> seen;
  seen.reserve(1000000);
  CounterRng rng(1);
  for (int i = 0; i < 1000000; ++i) {
    const std::string path = "cell/" + std::to_string(rng.next_u64()) + "/" + std::to_string(i);
    seen.push_back(resolve_seeds(20240607, path));
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
}

TEST(CounterRng, ReproducibleStreamsAndRanges) {
  CounterRng a(3), b(3), c(3, 1);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_NE(CounterRng(3).next_u64(), c.next_u64());
  CounterRng d(4);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(d.below(7), 7u);
}
