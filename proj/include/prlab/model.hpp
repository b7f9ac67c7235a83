#pragma once

// Probabilistic worlds: the jointly Gaussian denoising toy (X ~ N(0,1),
// Y = X + N, N ~ N(0, sigma_n^2)) and finite discrete joint pmfs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prlab/error.hpp"
#include "prlab/random.hpp"

namespace prlab {

struct PosteriorParams {
  double mean;
  double variance;
};

class GaussianToyModel {
 public:
  explicit GaussianToyModel(double sigma_n) : sigma_n_(sigma_n) {
    if (!(sigma_n > 0.0) || !std::isfinite(sigma_n)) {
      throw InvalidParameter("sigma_n must be positive and finite (sigma_n = 0 is an invertible degradation)");
    }
  }

  [[nodiscard]] double sigma_n() const noexcept { return sigma_n_; }
  [[nodiscard]] double noise_variance() const noexcept { return sigma_n_ * sigma_n_; }
  [[nodiscard]] double measurement_variance() const noexcept { return 1.0 + noise_variance(); }

  [[nodiscard]] Eigen::Vector2d mean() const { return Eigen::Vector2d::Zero(); }

  /// Covariance of (X, Y).
  [[nodiscard]] Eigen::Matrix2d covariance() const {
    Eigen::Matrix2d c;
    c << 1.0, 1.0, 1.0, measurement_variance();
    return c;
  }

  /// X | Y = y is Gaussian with these parameters.
  [[nodiscard]] PosteriorParams posterior(double y) const noexcept {
    const double v = measurement_variance();
    return {y / v, 1.0 - 1.0 / v};
  }

 private:
  double sigma_n_;
};

inline GaussianToyModel gaussian_toy(double sigma_n) { return GaussianToyModel(sigma_n); }

inline PosteriorParams posterior_params(const GaussianToyModel& model, double y) noexcept {
  return model.posterior(y);
}

/// i.i.d. (x, y) records stored as flat arrays.
struct EmpiricalJointSample {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t x_dim = 1;
  std::size_t y_dim = 1;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const noexcept { return x_dim == 0 ? 0 : x.size() / x_dim; }
  [[nodiscard]] std::span<const double> x_at(std::size_t i) const { return {x.data() + i * x_dim, x_dim}; }
  [[nodiscard]] std::span<const double> y_at(std::size_t i) const { return {y.data() + i * y_dim, y_dim}; }
};

/// Draws n pairs; per record the stream yields x first, then the noise.
inline EmpiricalJointSample sample_joint(const GaussianToyModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("sample_joint: n must be at least 1");
  EmpiricalJointSample out;
  out.seed = seed;
  out.x.resize(n);
  out.y.resize(n);
  CounterRng rng(seed);
  const double s = model.sigma_n();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double noise = s * rng.normal();
    out.x[i] = x;
    out.y[i] = x + noise;
  }
  return out;
}

/// Draws n measurements from p_Y only.
inline std::vector<double> sample_measurements(const GaussianToyModel& model, std::size_t n, std::uint64_t seed) {
  return sample_joint(model, n, seed).y;
}

inline void write_csv(std::ostream& os, const EmpiricalJointSample& sample) {
  if (sample.x_dim != 1 || sample.y_dim != 1) {
    throw InvalidParameter("CSV export supports scalar x and y only");
  }
  os << "x,y\n";
  char buf[64];
  for (std::size_t i = 0; i < sample.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,", sample.x[i]);
    os << buf;
    std::snprintf(buf, sizeof buf, "%.17g\n", sample.y[i]);
    os << buf;
  }
}

/// Finite-support joint pmf over (x_vals[i], y_vals[j]); pmf is row-major
/// with rows indexed by x.
class DiscreteJointModel {
 public:
  DiscreteJointModel(std::vector<double> x_vals, std::vector<double> y_vals, std::vector<std::vector<double>> pmf)
      : x_vals_(std::move(x_vals)), y_vals_(std::move(y_vals)) {
    validate_grid(x_vals_, "x_vals");
    validate_grid(y_vals_, "y_vals");
    if (pmf.size() != x_vals_.size()) throw InvalidParameter("pmf must have one row per x value");
    pmf_.reserve(x_vals_.size() * y_vals_.size());
    double total = 0.0;
    for (const auto& row : pmf) {
      if (row.size() != y_vals_.size()) throw InvalidParameter("pmf must have one column per y value");
      for (double p : row) {
        if (!std::isfinite(p) || p < 0.0) throw InvalidParameter("pmf entries must be finite and nonnegative");
        pmf_.push_back(p);
        total += p;
      }
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidParameter("pmf must sum to 1 (within 1e-12)");

    y_marginal_.assign(y_vals_.size(), 0.0);
    for (std::size_t i = 0; i < x_vals_.size(); ++i)
      for (std::size_t j = 0; j < y_vals_.size(); ++j) y_marginal_[j] += mass(i, j);

    invertible_ = true;
    for (std::size_t j = 0; j < y_vals_.size(); ++j) {
      std::size_t atoms = 0;
      for (std::size_t i = 0; i < x_vals_.size(); ++i) atoms += mass(i, j) > 0.0 ? 1 : 0;
      if (atoms >= 2) invertible_ = false;
    }
  }

  [[nodiscard]] const std::vector<double>& x_vals() const noexcept { return x_vals_; }
  [[nodiscard]] const std::vector<double>& y_vals() const noexcept { return y_vals_; }
  [[nodiscard]] std::size_t x_size() const noexcept { return x_vals_.size(); }
  [[nodiscard]] std::size_t y_size() const noexcept { return y_vals_.size(); }
  [[nodiscard]] double mass(std::size_t xi, std::size_t yj) const { return pmf_[xi * y_vals_.size() + yj]; }
  [[nodiscard]] const std::vector<double>& y_marginal() const noexcept { return y_marginal_; }

  /// True when every posterior is a point mass; the perception-robustness
  /// theorem does not apply to such models.
  [[nodiscard]] bool invertible() const noexcept { return invertible_; }

  [[nodiscard]] std::vector<double> posterior(std::size_t y_index) const {
    if (y_index >= y_vals_.size()) throw InvalidParameter("y index out of range");
    const double marginal = y_marginal_[y_index];
    if (!(marginal > 0.0)) throw UndefinedPosterior("posterior undefined for a zero-marginal measurement");
    std::vector<double> post(x_vals_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x_vals_.size(); ++i) total += post[i] = mass(i, y_index);
    for (double& p : post) p /= total;
    return post;
  }

 private:
  static void validate_grid(const std::vector<double>& v, const char* name) {
    if (v.empty()) throw InvalidParameter(std::string(name) + " must be nonempty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw InvalidParameter(std::string(name) + " must be finite");
      if (i > 0 && !(v[i - 1] < v[i])) {
        throw InvalidParameter(std::string(name) + " must be sorted with distinct values");
      }
    }
  }

  std::vector<double> x_vals_;
  std::vector<double> y_vals_;
  std::vector<double> pmf_;
  std::vector<double> y_marginal_;
  bool invertible_ = false;
};

inline DiscreteJointModel discrete_model(std::vector<double> x_vals, std::vector<double> y_vals,
                                         std::vector<std::vector<double>> pmf) {
  return {std::move(x_vals), std::move(y_vals), std::move(pmf)};
}

inline std::vector<double> discrete_posterior(const DiscreteJointModel& model, std::size_t y_index) {
  return model.posterior(y_index);
}

}  // namespace prlab
