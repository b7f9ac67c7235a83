#pragma once

// Lipschitz lower-bound probes, I-FGSM and farthest-point exploration of a
// deterministic estimator's outputs inside an l-infinity ball.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prlab/error.hpp"
#include "prlab/estimator.hpp"
#include "prlab/model.hpp"
#include "prlab/random.hpp"

namespace prlab {

enum class AttackObjective { MaxOutputChange, FpsSpread };

/// How the FPS loss combines previous outputs. Mean averages the squared
/// distance to every output so far; LastOnly keeps only the most recent one.
enum class FpsLoss { Mean, LastOnly };

struct AttackConfig {
  double alpha = 1.0 / 255.0;  // l-infinity radius; per-step size is alpha / steps
  std::size_t steps = 10;
  AttackObjective objective = AttackObjective::MaxOutputChange;
  FpsLoss fps_loss = FpsLoss::Mean;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidParameter("attack alpha must be positive");
    if (steps == 0) throw InvalidParameter("attack needs at least one step");
  }
};

/// One cell of a tradeoff sweep.
struct TradeoffPoint {
  double control = 0.0;
  double jemd = 0.0;
  double kbar = 0.0;
  std::size_t n_eval = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> auxiliary;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

inline std::vector<double> draw_measurement(const GaussianToyModel& model, CounterRng& rng, std::size_t dim) {
  std::vector<double> y(dim);
  const double sd = std::sqrt(model.measurement_variance());
  for (double& v : y) v = sd * rng.normal();
  return y;
}

}  // namespace detail

/// |f(y1) - f(y2)|_2 / |y1 - y2|_2.
inline double k_ratio(const Estimator& e, std::span<const double> y1, std::span<const double> y2) {
  e.require_deterministic("k_ratio");
  if (y1.size() != y2.size()) throw InvalidParameter("k_ratio: input dimensions differ");
  const double dy = detail::squared_distance(y1, y2);
  if (!(dy > 0.0)) throw InvalidParameter("k_ratio: inputs must differ");
  const auto f1 = e.evaluate(y1);
  const auto f2 = e.evaluate(y2);
  return std::sqrt(detail::squared_distance(f1, f2) / dy);
}

inline double k_ratio(const Estimator& e, double y1, double y2) {
  const double a[1] = {y1};
  const double b[1] = {y2};
  return k_ratio(e, a, b);
}

/// Mean k_ratio(y, y + z) over n measurements y ~ p_Y with z ~ N(0, sigma_z2 I).
/// Input i draws from its own substream, so the value does not depend on
/// evaluation order.
inline double kbar_random(const Estimator& e, const GaussianToyModel& model, std::size_t n, double sigma_z2,
                          std::uint64_t seed) {
  e.require_deterministic("kbar_random");
  if (n == 0) throw InvalidParameter("kbar_random: n must be at least 1");
  if (!(sigma_z2 > 0.0)) throw InvalidParameter("kbar_random: sigma_z2 must be positive");
  const std::uint64_t base = resolve_seeds(seed, "probe/random");
  const double sd_z = std::sqrt(sigma_z2);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(base, i);
    const auto y = detail::draw_measurement(model, rng, e.input_dim());
    auto y2 = y;
    for (double& v : y2) v += sd_z * rng.normal();
    sum += k_ratio(e, y, y2);
  }
  return sum / static_cast<double>(n);
}

namespace detail {

/// Gradient of the attack loss with respect to the current input y_t.
/// `anchors` are the outputs the loss pushes away from: f(y) for
/// MaxOutputChange, the harvested outputs for FpsSpread.
inline std::vector<double> attack_gradient(const Estimator& e, std::span<const double> y_t,
                                           const std::vector<std::vector<double>>& anchors) {
  const auto out = e.evaluate(y_t);
  const Eigen::MatrixXd J = e.input_gradient(y_t);
  Eigen::VectorXd dout = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.size()));
  for (const auto& a : anchors)
    for (std::size_t k = 0; k < out.size(); ++k) dout[static_cast<Eigen::Index>(k)] += 2.0 * (out[k] - a[k]);
  dout /= static_cast<double>(anchors.size());
  const Eigen::VectorXd g = J.transpose() * dout;
  return {g.data(), g.data() + g.size()};
}

/// T sign-gradient ascent steps of size alpha / T from y, each projected onto
/// the l-infinity ball of radius alpha around y. A zero gradient component
/// steps in the + direction.
inline std::vector<double> sign_ascent(const Estimator& e, std::span<const double> y, const AttackConfig& cfg,
                                       const std::vector<std::vector<double>>& anchors) {
  const double step = cfg.alpha / static_cast<double>(cfg.steps);
  std::vector<double> offset(y.size(), 0.0);
  std::vector<double> y_t(y.begin(), y.end());
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto g = attack_gradient(e, y_t, anchors);
    for (std::size_t k = 0; k < y.size(); ++k) {
      offset[k] = std::clamp(offset[k] + (g[k] < 0.0 ? -step : step), -cfg.alpha, cfg.alpha);
      y_t[k] = y[k] + offset[k];
    }
  }
  return y_t;
}

}  // namespace detail

/// I-FGSM maximizing |f(y_t) - f(y)|^2 inside the alpha ball around y.
inline std::vector<double> ifgsm(const Estimator& e, std::span<const double> y, const AttackConfig& cfg) {
  e.require_deterministic("ifgsm");
  cfg.validate();
  if (y.size() != e.input_dim()) throw InvalidParameter("ifgsm: input dimension mismatch");
  return detail::sign_ascent(e, y, cfg, {e.evaluate(y)});
}

inline double ifgsm(const Estimator& e, double y, const AttackConfig& cfg) {
  const double in[1] = {y};
  return ifgsm(e, std::span<const double>(in, 1), cfg)[0];
}

struct KbarEstimate {
  double kbar = 0.0;
  std::size_t n = 0;
  std::size_t degenerate = 0;  // attacks that ended back at y (ratio undefined)
};

/// Mean k_ratio(y, ifgsm(y)) over n measurements y ~ p_Y (seeded by cfg.seed).
/// Near a discontinuity the sign iteration can oscillate and finish exactly at
/// y; those inputs carry no ratio and are left out of the mean and counted.
inline KbarEstimate kbar_ifgsm_detail(const Estimator& e, const GaussianToyModel& model, std::size_t n,
                                      const AttackConfig& cfg) {
  e.require_deterministic("kbar_ifgsm");
  cfg.validate();
  if (n == 0) throw InvalidParameter("kbar_ifgsm: n must be at least 1");
  const std::uint64_t base = resolve_seeds(cfg.seed, "probe/ifgsm");
  KbarEstimate est;
  est.n = n;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(base, i);
    const auto y = detail::draw_measurement(model, rng, e.input_dim());
    const auto y_adv = ifgsm(e, y, cfg);
    if (y_adv == y) {
      ++est.degenerate;
      continue;
    }
    sum += k_ratio(e, y, y_adv);
  }
  if (est.degenerate < n) est.kbar = sum / static_cast<double>(n - est.degenerate);
  return est;
}

inline double kbar_ifgsm(const Estimator& e, const GaussianToyModel& model, std::size_t n, const AttackConfig& cfg) {
  return kbar_ifgsm_detail(e, model, n, cfg).kbar;
}

struct FpsSample {
  std::vector<double> y_adv;
  std::vector<double> output;
};

/// Farthest-point exploration: sample 0 is (y, f(y)); each further sample
/// restarts I-FGSM at y and maximizes the mean squared distance of f(y_adv)
/// to the outputs collected so far (or to the latest one, for LastOnly).
inline std::vector<FpsSample> fps_explore(const Estimator& e, std::span<const double> y, std::size_t S,
                                          const AttackConfig& cfg) {
  e.require_deterministic("fps_explore");
  cfg.validate();
  if (S == 0) throw InvalidParameter("fps_explore: S must be at least 1");
  if (y.size() != e.input_dim()) throw InvalidParameter("fps_explore: input dimension mismatch");
  std::vector<FpsSample> samples;
  samples.push_back({std::vector<double>(y.begin(), y.end()), e.evaluate(y)});
  std::vector<std::vector<double>> outputs{samples[0].output};
  for (std::size_t i = 1; i < S; ++i) {
    const auto y_adv = cfg.fps_loss == FpsLoss::Mean ? detail::sign_ascent(e, y, cfg, outputs)
                                                     : detail::sign_ascent(e, y, cfg, {outputs.back()});
    samples.push_back({y_adv, e.evaluate(y_adv)});
    outputs.push_back(samples.back().output);
  }
  return samples;
}

inline std::vector<FpsSample> fps_explore(const Estimator& e, double y, std::size_t S, const AttackConfig& cfg) {
  const double in[1] = {y};
  return fps_explore(e, std::span<const double>(in, 1), S, cfg);
}

/// Largest pairwise L2 distance among the outputs.
inline double output_spread(const std::vector<FpsSample>& samples) {
  double best = 0.0;
  for (std::size_t a = 0; a < samples.size(); ++a)
    for (std::size_t b = a + 1; b < samples.size(); ++b)
      best = std::max(best, detail::squared_distance(samples[a].output, samples[b].output));
  return std::sqrt(best);
}

}  // namespace prlab
