#pragma once

// Conditional GAN training of the toy denoiser with an optional robustness
// term: generator loss = non-saturating CGAN loss + lambda * E|f(Y) - f(Y+Z)|^2,
// critic loss = logistic CGAN loss + R1 penalty on real pairs.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prlab/error.hpp"
#include "prlab/estimator.hpp"
#include "prlab/mlp.hpp"
#include "prlab/model.hpp"
#include "prlab/random.hpp"

namespace prlab {

struct TrainConfig {
  double lambda = 0.0;
  double sigma_z2 = 0.2;
  bool z_param_is_stddev = false;  // read sigma_z2 as a standard deviation instead
  std::size_t steps = 20000;
  std::size_t batch = 128;
  std::size_t train_samples = 10000;
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double r1_coeff = 1.0;
  double r1_h = 1e-4;
  std::size_t lr_halving_start = 10000;
  std::size_t lr_halving_period = 1000;
  std::uint64_t seed = 0;

  /// Long-run settings: 100k steps on 100k samples, halving from step 50k every 5k.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.steps = 100000;
    c.train_samples = 100000;
    c.lr_halving_start = 50000;
    c.lr_halving_period = 5000;
    return c;
  }

  [[nodiscard]] double z_stddev() const { return z_param_is_stddev ? sigma_z2 : std::sqrt(sigma_z2); }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be nonnegative");
    if (!(sigma_z2 > 0.0)) throw InvalidParameter("sigma_z2 must be positive");
    if (steps == 0 || batch == 0 || train_samples == 0) throw InvalidParameter("steps, batch and samples must be positive");
    if (!(lr > 0.0)) throw InvalidParameter("learning rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw InvalidParameter("Adam betas must lie in [0, 1)");
    }
    if (!(r1_coeff >= 0.0)) throw InvalidParameter("r1 coefficient must be nonnegative");
    if (!(r1_h > 0.0)) throw InvalidParameter("r1 finite-difference step must be positive");
    if (lr_halving_period == 0) throw InvalidParameter("lr halving period must be positive");
  }
};

/// Multi-step schedule: lr0 before the start step, then halved once at the
/// start step and again every period.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.lr_halving_start) return cfg.lr;
  const auto halvings = (step - cfg.lr_halving_start) / cfg.lr_halving_period + 1;
  return cfg.lr * std::pow(0.5, static_cast<double>(halvings));
}

namespace detail {

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Interleaves (x, y) scalars into a batch x 2 critic input.
inline std::vector<double> pairs(std::span<const double> x, std::span<const double> y) {
  std::vector<double> out(2 * x.size());
  for (std::size_t b = 0; b < x.size(); ++b) {
    out[2 * b] = x[b];
    out[2 * b + 1] = y[b];
  }
  return out;
}

}  // namespace detail

struct GanLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
  MlpGradients d_grads;
  MlpGradients g_grads;
};

/// Which gradients gan_step_losses fills; both losses are always reported.
enum class GanSide { Both, Critic, Generator };

/// Critic and generator losses on one batch of real pairs.
///
/// d_loss = -mean log s(D(x, y)) - mean log(1 - s(D(G(y), y)))
/// g_loss = -mean log s(D(G(y), y))
/// d_grads treat G(y) as a constant; g_grads flow through the fake pair's
/// first coordinate. Gradients not requested by `side` stay zero.
inline GanLosses gan_step_losses(const MlpParams& D, const MlpParams& G, std::span<const double> x_batch,
                                 std::span<const double> y_batch, GanSide side = GanSide::Both) {
  if (x_batch.size() != y_batch.size() || x_batch.empty()) throw InvalidParameter("batch sizes differ or are empty");
  if (D.input_dim() != 2 || D.output_dim() != 1 || G.input_dim() != 1 || G.output_dim() != 1) {
    throw InvalidParameter("expected a 2 -> 1 critic and a 1 -> 1 generator");
  }
  const std::size_t B = x_batch.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  GanLosses out{0.0, 0.0, D.zeros_like(), G.zeros_like()};

  MlpCache g_cache;
  mlp_forward(G, y_batch, B, g_cache);
  const std::vector<double> fake_x = g_cache.output();

  MlpCache real_cache;
  MlpCache fake_cache;
  const auto real_in = detail::pairs(x_batch, y_batch);
  const auto fake_in = detail::pairs(fake_x, y_batch);
  mlp_forward(D, real_in, B, real_cache);
  mlp_forward(D, fake_in, B, fake_cache);
  const auto& lr = real_cache.output();
  const auto& lf = fake_cache.output();

  std::vector<double> grad_real(B);
  std::vector<double> grad_fake_d(B);
  std::vector<double> grad_fake_g(B);
  for (std::size_t b = 0; b < B; ++b) {
    out.d_loss += (detail::softplus(-lr[b]) + detail::softplus(lf[b])) * inv_b;
    out.g_loss += detail::softplus(-lf[b]) * inv_b;
    grad_real[b] = -detail::sigmoid(-lr[b]) * inv_b;
    grad_fake_d[b] = detail::sigmoid(lf[b]) * inv_b;
    grad_fake_g[b] = -detail::sigmoid(-lf[b]) * inv_b;
  }
  if (side != GanSide::Generator) {
    mlp_backward_accumulate(D, real_cache, grad_real, &out.d_grads, nullptr);
    mlp_backward_accumulate(D, fake_cache, grad_fake_d, &out.d_grads, nullptr);
  }
  if (side == GanSide::Critic) return out;

  std::vector<double> d_input;
  mlp_backward_accumulate(D, fake_cache, grad_fake_g, nullptr, &d_input);
  std::vector<double> grad_gen(B);
  for (std::size_t b = 0; b < B; ++b) grad_gen[b] = d_input[2 * b];
  mlp_backward_accumulate(G, g_cache, grad_gen, &out.g_grads, nullptr);
  return out;
}

struct PenaltyResult {
  double value = 0.0;
  MlpGradients grads;
};

/// R1 penalty coeff * mean_b sum_i g_i^2 with g_i the central difference of D
/// along input axis i at each real input. The parameter gradient is exact
/// for the stencil: it backpropagates through all 2 * dim forward passes.
///
/// real_batch is batch x D.input_dim() row-major.
inline PenaltyResult r1_penalty(const MlpParams& D, std::span<const double> real_batch, double h, double coeff = 1.0) {
  if (!(h > 0.0)) throw InvalidParameter("r1 finite-difference step must be positive");
  const std::size_t dim = D.input_dim();
  if (dim == 0 || real_batch.size() % dim != 0 || real_batch.empty()) throw InvalidParameter("bad R1 batch shape");
  if (D.output_dim() != 1) throw InvalidParameter("R1 penalty expects a scalar critic");
  const std::size_t B = real_batch.size() / dim;
  const double inv_b = 1.0 / static_cast<double>(B);

  PenaltyResult out{0.0, D.zeros_like()};
  std::vector<double> shifted(real_batch.begin(), real_batch.end());
  std::vector<double> upstream(B);
  MlpCache plus;
  MlpCache minus;
  for (std::size_t axis = 0; axis < dim; ++axis) {
    for (std::size_t b = 0; b < B; ++b) shifted[b * dim + axis] = real_batch[b * dim + axis] + h;
    mlp_forward(D, shifted, B, plus);
    for (std::size_t b = 0; b < B; ++b) shifted[b * dim + axis] = real_batch[b * dim + axis] - h;
    mlp_forward(D, shifted, B, minus);
    for (std::size_t b = 0; b < B; ++b) shifted[b * dim + axis] = real_batch[b * dim + axis];

    for (std::size_t b = 0; b < B; ++b) {
      const double g = (plus.output()[b] - minus.output()[b]) / (2.0 * h);
      out.value += coeff * g * g * inv_b;
      // d(coeff g^2 / B) / dD(x + h e) = coeff * 2 g / (2h B)
      upstream[b] = coeff * g / h * inv_b;
    }
    mlp_backward_accumulate(D, plus, upstream, &out.grads, nullptr);
    for (double& u : upstream) u = -u;
    mlp_backward_accumulate(D, minus, upstream, &out.grads, nullptr);
  }
  return out;
}

/// Robustness loss mean_b (G(y_b) - G(y_b + z_b))^2 with fresh
/// z_b ~ N(0, z_stddev^2) drawn from the stream; gradients flow through both
/// evaluations.
inline PenaltyResult robustness_loss(const MlpParams& G, std::span<const double> y_batch, double z_stddev,
                                     CounterRng& stream) {
  if (!(z_stddev > 0.0)) throw InvalidParameter("perturbation scale must be positive");
  if (G.input_dim() != 1 || G.output_dim() != 1) throw InvalidParameter("expected a 1 -> 1 generator");
  const std::size_t B = y_batch.size();
  if (B == 0) throw InvalidParameter("empty batch");
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<double> perturbed(y_batch.begin(), y_batch.end());
  for (double& v : perturbed) v += z_stddev * stream.normal();

  MlpCache clean;
  MlpCache noisy;
  mlp_forward(G, y_batch, B, clean);
  mlp_forward(G, perturbed, B, noisy);
  PenaltyResult out{0.0, G.zeros_like()};
  std::vector<double> up_clean(B);
  std::vector<double> up_noisy(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double d = clean.output()[b] - noisy.output()[b];
    out.value += d * d * inv_b;
    up_clean[b] = 2.0 * d * inv_b;
    up_noisy[b] = -2.0 * d * inv_b;
  }
  mlp_backward_accumulate(G, clean, up_clean, &out.grads, nullptr);
  mlp_backward_accumulate(G, noisy, up_noisy, &out.grads, nullptr);
  return out;
}

struct StepRecord {
  std::size_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;  // adversarial part only
  double r1 = 0.0;
  double lr = 0.0;
  double robustness_loss = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;

  /// Interleaved per-update losses: critic then generator for each step.
  [[nodiscard]] std::vector<double> losses() const {
    std::vector<double> out;
    out.reserve(2 * steps.size());
    for (const auto& s : steps) {
      out.push_back(s.d_loss + s.r1);
      out.push_back(s.g_loss);
    }
    return out;
  }
};

struct TrainResult {
  Estimator estimator;
  TrainHistory history;
  MlpParams discriminator;
};

/// Called after every step with the step index, its record and the current
/// generator; returning false stops training early.
using TrainObserver = std::function<bool(std::size_t, const StepRecord&, const MlpParams&)>;

/// Alternating one critic update and one generator update per step.
inline TrainResult train_denoiser(const GaussianToyModel& model, const TrainConfig& cfg,
                                  const TrainObserver& observer = {}) {
  cfg.validate();
  const EmpiricalJointSample data = sample_joint(model, cfg.train_samples, resolve_seeds(cfg.seed, "data"));
  MlpParams G = init_mlp(MlpArchitecture::generator(), resolve_seeds(cfg.seed, "generator"));
  MlpParams D = init_mlp(MlpArchitecture::discriminator(), resolve_seeds(cfg.seed, "discriminator"));
  AdamState adam_g(G);
  AdamState adam_d(D);
  const AdamOptions adam_opt{cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  CounterRng batch_rng(resolve_seeds(cfg.seed, "batches"));
  CounterRng z_rng(resolve_seeds(cfg.seed, "z"));
  const double z_sd = cfg.z_stddev();

  TrainHistory history;
  history.steps.reserve(cfg.steps);
  std::vector<double> xb(cfg.batch);
  std::vector<double> yb(cfg.batch);
  auto draw_batch = [&] {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto i = static_cast<std::size_t>(batch_rng.below(data.size()));
      xb[b] = data.x[i];
      yb[b] = data.y[i];
    }
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    rec.lr = learning_rate_at(cfg, step);

    // critic update
    draw_batch();
    GanLosses d_side = gan_step_losses(D, G, xb, yb, GanSide::Critic);
    rec.d_loss = d_side.d_loss;
    if (cfg.r1_coeff > 0.0) {
      const auto real_in = detail::pairs(xb, yb);
      PenaltyResult r1 = r1_penalty(D, real_in, cfg.r1_h, cfg.r1_coeff);
      rec.r1 = r1.value;
      axpy(d_side.d_grads, 1.0, r1.grads);
    }
    if (!std::isfinite(rec.d_loss) || !std::isfinite(rec.r1)) throw TrainingDiverged(step, "critic loss is not finite");
    adam_step(adam_d, D, d_side.d_grads, rec.lr, adam_opt);

    // generator update
    draw_batch();
    GanLosses g_side = gan_step_losses(D, G, xb, yb, GanSide::Generator);
    rec.g_loss = g_side.g_loss;
    PenaltyResult robust = robustness_loss(G, yb, z_sd, z_rng);
    rec.robustness_loss = robust.value;
    if (cfg.lambda > 0.0) axpy(g_side.g_grads, cfg.lambda, robust.grads);
    if (!std::isfinite(rec.g_loss) || !std::isfinite(rec.robustness_loss)) {
      throw TrainingDiverged(step, "generator loss is not finite");
    }
    adam_step(adam_g, G, g_side.g_grads, rec.lr, adam_opt);
    history.steps.push_back(rec);
    if (observer && !observer(step, rec, G)) break;
  }
  return {make_trained_mlp(std::move(G)), std::move(history), std::move(D)};
}

inline void write_history_csv(std::ostream& os, const TrainHistory& h) {
  os << "step,d_loss,g_loss,r1,lr,robustness_loss\n";
  char buf[256];
  for (const auto& s : h.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step, s.d_loss, s.g_loss, s.r1, s.lr,
                  s.robustness_loss);
    os << buf;
  }
}

}  // namespace prlab
