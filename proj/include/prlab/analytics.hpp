#pragma once

// Conditional MSE (closed form and Monte Carlo), residual-noise diagnostics,
// and the K-bar versus JEMD sweep over the zigzag and trained families.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "prlab/error.hpp"
#include "prlab/estimator.hpp"
#include "prlab/model.hpp"
#include "prlab/normal_dist.hpp"
#include "prlab/random.hpp"
#include "prlab/robustness.hpp"
#include "prlab/stats.hpp"
#include "prlab/training.hpp"
#include "prlab/transport.hpp"

namespace prlab {

/// E[(X - X_hat)^2 | Y = y] for the three closed-form estimators.
inline double conditional_mse_closed(EstimatorKind kind, const GaussianToyModel& model, double y) {
  const double v = model.measurement_variance();
  const double mmse = 1.0 - 1.0 / v;
  switch (kind) {
    case EstimatorKind::Mmse: return mmse;
    case EstimatorKind::PosteriorSamplerRef: return 2.0 * mmse;
    case EstimatorKind::Dmax: {
      const double c = (std::sqrt(v) - 1.0) / v;
      return mmse + c * c * y * y;
    }
    default: break;
  }
  throw InvalidParameter(std::string("no closed-form conditional MSE for ") + to_string(kind));
}

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t n = 0;
};

/// Monte-Carlo E[(X - X_hat)^2 | Y = y] with X drawn from the posterior. A
/// deterministic estimator is evaluated once; the stochastic reference draws
/// a fresh output per sample from a stream forked off `seed`.
inline McEstimate conditional_mse_mc(const Estimator& e, const GaussianToyModel& model, double y, std::size_t n,
                                     std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("conditional_mse_mc: n must be at least 1");
  const PosteriorParams post = model.posterior(y);
  const double sd = std::sqrt(post.variance);
  CounterRng rng(resolve_seeds(seed, "cmse/x"));
  const Estimator est = e.fork(resolve_seeds(seed, "cmse/estimator"));
  const double fixed = est.stochastic() ? 0.0 : est(y);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = post.mean + sd * rng.normal();
    const double xhat = est.stochastic() ? est(y) : fixed;
    const double d2 = (x - xhat) * (x - xhat);
    sum += d2;
    sum_sq += d2 * d2;
  }
  const double nn = static_cast<double>(n);
  McEstimate out;
  out.n = n;
  out.value = sum / nn;
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - nn * out.value * out.value) / (nn - 1.0));
    out.standard_error = std::sqrt(var / nn);
  } else {
    out.standard_error = std::numeric_limits<double>::infinity();
  }
  return out;
}

struct ResidualReport {
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  double pearson_corr = 0.0;
  std::size_t n = 0;
};

/// Residual noise n_hat = y - x_hat on n fresh draws: KS test of n_hat against
/// N(0, sigma_n^2) and the Pearson correlation of (n_hat, x_hat).
inline ResidualReport residual_diagnostics(const Estimator& e, const GaussianToyModel& model, std::size_t n,
                                           std::uint64_t seed) {
  if (n < 100) throw InvalidParameter("residual_diagnostics: n must be at least 100");
  const EmpiricalJointSample data = sample_joint(model, n, resolve_seeds(seed, "residual/data"));
  const Estimator est = e.fork(resolve_seeds(seed, "residual/estimator"));
  const std::vector<double> xhat = est.stochastic() ? [&] {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = est(data.y[i]);
    return v;
  }()
                                                    : est.evaluate_batch(data.y);
  std::vector<double> nhat(n);
  for (std::size_t i = 0; i < n; ++i) nhat[i] = data.y[i] - xhat[i];
  const double s = model.sigma_n();
  const KsResult ks = ks_statistic(nhat, [s](double t) { return normal_cdf(t / s); });
  return {ks.statistic, ks.pvalue, pearson(nhat, xhat), n};
}

// ---------------------------------------------------------------------------
// Tradeoff sweep

struct ZigzagSweep {
  std::vector<double> deltas;
  double q_clip = kDefaultQClip;
  /// Probe variance for K-bar. Kept below the smallest bin width squared so
  /// the probe resolves within-bin slopes instead of averaging across bins.
  double probe_sigma_z2 = 0.0025;
};

/// K-bar probes use the training noise law (train.sigma_z2).
struct LambdaSweep {
  std::vector<double> lambdas;
  TrainConfig train;
};

using SweepFamily = std::variant<ZigzagSweep, LambdaSweep>;

inline const char* family_name(const SweepFamily& f) {
  return std::holds_alternative<ZigzagSweep>(f) ? "zigzag" : "lambda";
}

struct SweepOptions {
  std::size_t n_metric = 2000;
  std::size_t n_probe = 1000;
  JemdOptions jemd{.transport = {}, .paired = true};
  std::vector<std::uint64_t> seeds{0};
  std::size_t threads = 1;
};

/// One (control, seed) cell, or a seed-aggregated row when `aggregated`.
struct SweepCell {
  TradeoffPoint point;
  bool aggregated = false;
  std::string status = "ok";
};

struct SweepResult {
  std::string family;
  std::vector<SweepCell> cells;       // grid order, seeds inner
  std::vector<SweepCell> aggregated;  // one per control value, mean over ok seeds
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Builds (or trains) one estimator per grid value and seed and measures
/// JEMD and random-probe K-bar on evaluation draws that depend on the seed
/// only, so every control value sees the same measurements. Training failures
/// mark the cell and the sweep continues.
inline SweepResult tradeoff_sweep(const SweepFamily& family, const GaussianToyModel& model,
                                  const SweepOptions& opt = {}) {
  const std::vector<double>& grid = std::holds_alternative<ZigzagSweep>(family)
                                        ? std::get<ZigzagSweep>(family).deltas
                                        : std::get<LambdaSweep>(family).lambdas;
  if (grid.empty()) throw InvalidParameter("tradeoff_sweep: empty grid");
  if (opt.seeds.empty()) throw InvalidParameter("tradeoff_sweep: no seeds");
  if (opt.n_metric == 0 || opt.n_probe == 0) throw InvalidParameter("tradeoff_sweep: sample sizes must be positive");

  SweepResult res;
  res.family = family_name(family);
  const std::size_t S = opt.seeds.size();
  res.cells.resize(grid.size() * S);

  detail::parallel_for(res.cells.size(), opt.threads, [&](std::size_t idx) {
    const double control = grid[idx / S];
    const std::uint64_t seed = opt.seeds[idx % S];
    SweepCell& cell = res.cells[idx];
    cell.point.control = control;
    cell.point.seed = seed;
    cell.point.n_eval = opt.n_metric;
    try {
      const std::uint64_t eval_seed = resolve_seeds(seed, "sweep/eval");
      const std::uint64_t probe_seed = resolve_seeds(seed, "sweep/probe");
      std::optional<Estimator> est;
      double probe_var = 0.0;
      if (const auto* z = std::get_if<ZigzagSweep>(&family)) {
        est = make_zigzag(model, control, z->q_clip);
        probe_var = z->probe_sigma_z2;
      } else {
        TrainConfig cfg = std::get<LambdaSweep>(family).train;
        probe_var = cfg.z_stddev() * cfg.z_stddev();
        cfg.lambda = control;
        cfg.seed = resolve_seeds(seed, "sweep/train");
        TrainResult tr = train_denoiser(model, cfg);
        cell.point.auxiliary["final_d_loss"] = tr.history.steps.back().d_loss;
        cell.point.auxiliary["final_g_loss"] = tr.history.steps.back().g_loss;
        cell.point.auxiliary["final_robustness_loss"] = tr.history.steps.back().robustness_loss;
        est = std::move(tr.estimator);
        cell.point.auxiliary["jemd_mmse"] = jemd(make_mmse(model), model, opt.n_metric, eval_seed, opt.jemd);
      }
      cell.point.jemd = jemd(*est, model, opt.n_metric, eval_seed, opt.jemd);
      cell.point.kbar = kbar_random(*est, model, opt.n_probe, probe_var, probe_seed);
    } catch (const TrainingDiverged& ex) {
      cell.status = "diverged at step " + std::to_string(ex.step());
    } catch (const std::exception& ex) {
      cell.status = std::string("failed: ") + ex.what();
    }
  });

  for (std::size_t g = 0; g < grid.size(); ++g) {
    SweepCell agg;
    agg.aggregated = true;
    agg.point.control = grid[g];
    agg.point.n_eval = opt.n_metric;
    std::vector<double> j;
    std::vector<double> k;
    std::map<std::string, std::vector<double>> aux;
    for (std::size_t s = 0; s < S; ++s) {
      const SweepCell& c = res.cells[g * S + s];
      if (c.status != "ok") continue;
      j.push_back(c.point.jemd);
      k.push_back(c.point.kbar);
      for (const auto& [name, v] : c.point.auxiliary) aux[name].push_back(v);
    }
    if (j.empty()) {
      agg.status = "failed";
    } else {
      agg.point.jemd = mean(j);
      agg.point.kbar = mean(k);
      agg.point.auxiliary["jemd_sd"] = stddev(j);
      agg.point.auxiliary["kbar_sd"] = stddev(k);
      agg.point.auxiliary["seeds_ok"] = static_cast<double>(j.size());
      for (const auto& [name, v] : aux) agg.point.auxiliary[name] = mean(v);
      if (j.size() < S) agg.status = "partial";
    }
    res.aggregated.push_back(std::move(agg));
  }
  return res;
}

/// Spearman correlations of the control value with the seed-averaged JEMD
/// and K-bar over rows that have at least one successful seed.
struct SweepTrend {
  double spearman_jemd = 0.0;
  double spearman_kbar = 0.0;
};

inline SweepTrend sweep_trend(const SweepResult& r) {
  std::vector<double> c;
  std::vector<double> j;
  std::vector<double> k;
  for (const auto& a : r.aggregated) {
    if (a.status == "failed") continue;
    c.push_back(a.point.control);
    j.push_back(a.point.jemd);
    k.push_back(a.point.kbar);
  }
  if (c.size() < 2) throw InvalidParameter("sweep_trend: fewer than two usable grid values");
  return {spearman(c, j), spearman(c, k)};
}

/// CSV `family,control,seed,jemd,kbar,jemd_sd,kbar_sd,status`; per-seed rows
/// first, then one aggregated row per control value with seed `mean`.
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "family,control,seed,jemd,kbar,jemd_sd,kbar_sd,status\n";
  char buf[512];
  for (const auto& c : r.cells) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%.17g,%.17g,,,%s\n", r.family.c_str(), c.point.control,
                  static_cast<unsigned long long>(c.point.seed), c.point.jemd, c.point.kbar, c.status.c_str());
    os << buf;
  }
  for (const auto& a : r.aggregated) {
    const auto get = [&](const char* k) {
      const auto it = a.point.auxiliary.find(k);
      return it == a.point.auxiliary.end() ? 0.0 : it->second;
    };
    std::snprintf(buf, sizeof buf, "%s,%.17g,mean,%.17g,%.17g,%.17g,%.17g,%s\n", r.family.c_str(), a.point.control,
                  a.point.jemd, a.point.kbar, get("jemd_sd"), get("kbar_sd"), a.status.c_str());
    os << buf;
  }
}

}  // namespace prlab
