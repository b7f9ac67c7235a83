#pragma once

// Restoration estimators y -> x_hat for the Gaussian toy problem.
//
// Mmse, Dmax, Zigzag and TrainedMlp are deterministic. PosteriorSamplerRef
// draws a fresh posterior sample per call and exists only as an analytic
// baseline; every robustness operation rejects it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "prlab/error.hpp"
#include "prlab/mlp.hpp"
#include "prlab/model.hpp"
#include "prlab/normal_dist.hpp"
#include "prlab/random.hpp"

namespace prlab {

enum class EstimatorKind { Mmse, Dmax, PosteriorSamplerRef, Zigzag, TrainedMlp };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Mmse: return "Mmse";
    case EstimatorKind::Dmax: return "Dmax";
    case EstimatorKind::PosteriorSamplerRef: return "PosteriorSamplerRef";
    case EstimatorKind::Zigzag: return "Zigzag";
    case EstimatorKind::TrainedMlp: return "TrainedMlp";
  }
  return "?";
}

struct MmseMap {
  double sigma_n;
  [[nodiscard]] double slope() const noexcept { return 1.0 / (1.0 + sigma_n * sigma_n); }
};

struct DmaxMap {
  double sigma_n;
  [[nodiscard]] double slope() const noexcept { return 1.0 / std::sqrt(1.0 + sigma_n * sigma_n); }
};

struct PosteriorSamplerRef {
  double sigma_n;
  std::uint64_t seed;
  mutable CounterRng stream;
};

/// Sweeps the posterior quantile across each measurement bin
/// [k * delta, (k + 1) * delta): f(y) = m(y) + s * Phi^-1(q + u(y) (1 - 2q)).
struct ZigzagMap {
  double sigma_n;
  double delta;
  double q_clip;

  [[nodiscard]] double bin_position(double y) const noexcept {
    const double u = (y - delta * std::floor(y / delta)) / delta;
    return std::clamp(u, 0.0, 1.0);
  }

  [[nodiscard]] double operator()(double y) const {
    const PosteriorParams post = GaussianToyModel(sigma_n).posterior(y);
    const double q = q_clip + bin_position(y) * (1.0 - 2.0 * q_clip);
    return post.mean + std::sqrt(post.variance) * normal_quantile(q);
  }
};

struct TrainedMlpMap {
  MlpParams params;
};

class Estimator {
 public:
  using Variant = std::variant<MmseMap, DmaxMap, PosteriorSamplerRef, ZigzagMap, TrainedMlpMap>;

  explicit Estimator(Variant v) : v_(std::move(v)) {}

  [[nodiscard]] EstimatorKind kind() const noexcept { return static_cast<EstimatorKind>(v_.index()); }
  [[nodiscard]] bool stochastic() const noexcept { return kind() == EstimatorKind::PosteriorSamplerRef; }
  [[nodiscard]] const Variant& variant() const noexcept { return v_; }

  [[nodiscard]] std::size_t input_dim() const noexcept {
    if (const auto* m = std::get_if<TrainedMlpMap>(&v_)) return m->params.input_dim();
    return 1;
  }
  [[nodiscard]] std::size_t output_dim() const noexcept {
    if (const auto* m = std::get_if<TrainedMlpMap>(&v_)) return m->params.output_dim();
    return 1;
  }

  void require_deterministic(const char* operation) const {
    if (stochastic()) {
      throw ContractViolation(std::string(operation) + " requires a deterministic estimator");
    }
  }

  [[nodiscard]] std::vector<double> evaluate(std::span<const double> y) const {
    if (y.size() != input_dim()) throw InvalidParameter("estimator input dimension mismatch");
    if (const auto* m = std::get_if<TrainedMlpMap>(&v_)) return mlp_forward(m->params, y).output;
    return {scalar(y[0])};
  }

  /// Scalar convenience for the 1-D toy.
  [[nodiscard]] double operator()(double y) const {
    if (input_dim() != 1 || output_dim() != 1) throw InvalidParameter("scalar call on a non-scalar estimator");
    if (const auto* m = std::get_if<TrainedMlpMap>(&v_)) {
      const double in[1] = {y};
      return mlp_forward(m->params, in).output[0];
    }
    return scalar(y);
  }

  /// Evaluates a batch of scalar inputs (one batched forward for MLPs).
  [[nodiscard]] std::vector<double> evaluate_batch(std::span<const double> ys) const {
    if (input_dim() != 1 || output_dim() != 1) throw InvalidParameter("batched call on a non-scalar estimator");
    if (const auto* m = std::get_if<TrainedMlpMap>(&v_)) {
      MlpCache cache;
      mlp_forward(m->params, ys, ys.size(), cache);
      return cache.output();
    }
    std::vector<double> out(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) out[i] = scalar(ys[i]);
    return out;
  }

  /// Jacobian d f / d y (output_dim x input_dim).
  ///
  /// Linear maps are exact, TrainedMlp is backpropagated, Zigzag uses central
  /// differences with step max(1e-6, 1e-6 |y|).
  [[nodiscard]] Eigen::MatrixXd input_gradient(std::span<const double> y) const {
    require_deterministic("input_gradient");
    if (y.size() != input_dim()) throw InvalidParameter("estimator input dimension mismatch");
    Eigen::MatrixXd J(output_dim(), input_dim());
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, MmseMap> || std::is_same_v<T, DmaxMap>) {
            J(0, 0) = m.slope();
          } else if constexpr (std::is_same_v<T, ZigzagMap>) {
            J(0, 0) = central_difference(m, y[0]);
          } else if constexpr (std::is_same_v<T, TrainedMlpMap>) {
            MlpCache cache;
            mlp_forward(m.params, y, 1, cache);
            std::vector<double> seed(output_dim(), 0.0);
            std::vector<double> row;
            for (std::size_t o = 0; o < output_dim(); ++o) {
              std::fill(seed.begin(), seed.end(), 0.0);
              seed[o] = 1.0;
              mlp_backward_accumulate(m.params, cache, seed, nullptr, &row);
              for (std::size_t i = 0; i < input_dim(); ++i) J(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) = row[i];
            }
          }
        },
        v_);
    return J;
  }

  [[nodiscard]] double input_gradient(double y) const {
    const double in[1] = {y};
    return input_gradient(std::span<const double>(in, 1))(0, 0);
  }

  /// Copy whose stochastic stream (if any) restarts from an independent sub-seed.
  [[nodiscard]] Estimator fork(std::uint64_t subseed) const {
    Estimator copy = *this;
    if (auto* s = std::get_if<PosteriorSamplerRef>(&copy.v_)) {
      s->seed = substream_seed(s->seed, subseed);
      s->stream = CounterRng(s->seed);
    }
    return copy;
  }

  [[nodiscard]] nlohmann::json to_json() const;
  static Estimator from_json(const nlohmann::json& j);

 private:
  static double central_difference(const ZigzagMap& m, double y) {
    const double h = std::max(1e-6, 1e-6 * std::abs(y));
    return (m(y + h) - m(y - h)) / (2.0 * h);
  }

  [[nodiscard]] double scalar(double y) const {
    return std::visit(
        [&](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, MmseMap> || std::is_same_v<T, DmaxMap>) {
            return m.slope() * y;
          } else if constexpr (std::is_same_v<T, PosteriorSamplerRef>) {
            const PosteriorParams post = GaussianToyModel(m.sigma_n).posterior(y);
            return post.mean + std::sqrt(post.variance) * m.stream.normal();
          } else if constexpr (std::is_same_v<T, ZigzagMap>) {
            return m(y);
          } else {
            const double in[1] = {y};
            return mlp_forward(m.params, in).output[0];
          }
        },
        v_);
  }

  Variant v_;
};

inline Estimator make_mmse(const GaussianToyModel& model) { return Estimator(MmseMap{model.sigma_n()}); }

inline Estimator make_dmax(const GaussianToyModel& model) { return Estimator(DmaxMap{model.sigma_n()}); }

inline Estimator make_posterior_sampler(const GaussianToyModel& model, std::uint64_t seed) {
  return Estimator(PosteriorSamplerRef{model.sigma_n(), seed, CounterRng(seed)});
}

inline constexpr double kDefaultQClip = 1e-3;

inline Estimator make_zigzag(const GaussianToyModel& model, double delta, double q_clip = kDefaultQClip) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidParameter("zigzag delta must be positive");
  if (!(q_clip > 0.0 && q_clip < 0.5)) throw InvalidParameter("zigzag q_clip must lie in (0, 0.5)");
  return Estimator(ZigzagMap{model.sigma_n(), delta, q_clip});
}

inline Estimator make_trained_mlp(MlpParams params) { return Estimator(TrainedMlpMap{std::move(params)}); }

inline std::vector<double> evaluate(const Estimator& e, std::span<const double> y) { return e.evaluate(y); }

inline Eigen::MatrixXd input_gradient(const Estimator& e, std::span<const double> y) { return e.input_gradient(y); }

inline nlohmann::json Estimator::to_json() const {
  nlohmann::json j;
  j["variant"] = to_string(kind());
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MmseMap> || std::is_same_v<T, DmaxMap>) {
          j["parameters"] = {{"sigma_n", m.sigma_n}};
        } else if constexpr (std::is_same_v<T, PosteriorSamplerRef>) {
          j["parameters"] = {{"sigma_n", m.sigma_n}};
          j["seed"] = m.seed;
        } else if constexpr (std::is_same_v<T, ZigzagMap>) {
          j["parameters"] = {{"sigma_n", m.sigma_n}, {"delta", m.delta}, {"q_clip", m.q_clip}};
        } else {
          j["parameters"] = {{"layers", prlab::to_json(m.params)}};
        }
      },
      v_);
  return j;
}

inline Estimator Estimator::from_json(const nlohmann::json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  const auto& p = j.at("parameters");
  if (variant == "Mmse") return make_mmse(GaussianToyModel(p.at("sigma_n").get<double>()));
  if (variant == "Dmax") return make_dmax(GaussianToyModel(p.at("sigma_n").get<double>()));
  if (variant == "PosteriorSamplerRef") {
    return make_posterior_sampler(GaussianToyModel(p.at("sigma_n").get<double>()), j.at("seed").get<std::uint64_t>());
  }
  if (variant == "Zigzag") {
    return make_zigzag(GaussianToyModel(p.at("sigma_n").get<double>()), p.at("delta").get<double>(),
                       p.at("q_clip").get<double>());
  }
  if (variant == "TrainedMlp") return make_trained_mlp(mlp_from_json(p.at("layers")));
  throw InvalidParameter("unknown estimator variant '" + variant + "'");
}

}  // namespace prlab
