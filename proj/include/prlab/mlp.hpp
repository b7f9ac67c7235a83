#pragma once

// Fixed-architecture fully-connected ReLU network with batched forward and
// hand-written reverse-mode gradients. ReLU follows every layer but the last.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "prlab/error.hpp"
#include "prlab/random.hpp"

namespace prlab {

/// One affine layer; weight is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  double& w(std::size_t o, std::size_t i) { return weight[o * in + i]; }
  [[nodiscard]] double w(std::size_t o, std::size_t i) const { return weight[o * in + i]; }

  [[nodiscard]] bool same_shape(const DenseLayer& other) const noexcept { return in == other.in && out == other.out; }
};

struct MlpArchitecture {
  std::size_t input_dim = 1;
  std::size_t hidden_width = 16;
  std::size_t inner_layers = 5;  // width -> width layers between first and last
  std::size_t output_dim = 1;

  [[nodiscard]] std::size_t depth() const noexcept { return inner_layers + 2; }

  /// Denoiser: 1 -> 16 -> ... -> 16 -> 1, seven affine layers.
  static MlpArchitecture generator() { return {1, 16, 5, 1}; }
  /// Conditional critic on (x, y): 2 -> 16 -> ... -> 16 -> 1, seven affine layers.
  static MlpArchitecture discriminator() { return {2, 16, 5, 1}; }

  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> layer_shapes() const {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    shapes.emplace_back(input_dim, hidden_width);
    for (std::size_t k = 0; k < inner_layers; ++k) shapes.emplace_back(hidden_width, hidden_width);
    shapes.emplace_back(hidden_width, output_dim);
    return shapes;
  }
};

namespace detail {
inline std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Parameters of a ReLU MLP. Every mutation through mutable_layers() stamps a
/// fresh generation so forward caches from before the change are detected.
class MlpParams {
 public:
  MlpParams() = default;

  explicit MlpParams(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidParameter("MLP needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.weight.size() != L.in * L.out || L.bias.size() != L.out) {
        throw InvalidParameter("layer storage does not match its declared shape");
      }
      if (l > 0 && layers_[l - 1].out != L.in) throw InvalidParameter("layer shapes do not chain");
    }
  }

  MlpParams(const MlpParams& other) : layers_(other.layers_) {}
  MlpParams& operator=(const MlpParams& other) {
    layers_ = other.layers_;
    generation_ = detail::next_generation();
    return *this;
  }
  MlpParams(MlpParams&&) noexcept = default;
  MlpParams& operator=(MlpParams&& other) noexcept {
    layers_ = std::move(other.layers_);
    generation_ = detail::next_generation();
    return *this;
  }

  [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() {
    generation_ = detail::next_generation();
    return layers_;
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in; }
  [[nodiscard]] std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out; }
  [[nodiscard]] std::size_t depth() const noexcept { return layers_.size(); }
  [[nodiscard]] std::uint64_t generation() const noexcept { return generation_; }

  [[nodiscard]] std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.weight.size() + L.bias.size();
    return n;
  }

  [[nodiscard]] bool same_shape(const MlpParams& other) const noexcept {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (!layers_[l].same_shape(other.layers_[l])) return false;
    return true;
  }

  /// Zero-valued parameters with the same shapes (used for gradients and
  /// optimizer moments).
  [[nodiscard]] MlpParams zeros_like() const {
    std::vector<DenseLayer> z;
    z.reserve(layers_.size());
    for (const auto& L : layers_) z.emplace_back(L.in, L.out);
    return MlpParams(std::move(z));
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
    }
    return true;
  }

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t generation_ = detail::next_generation();
};

using MlpGradients = MlpParams;

inline MlpParams zero_mlp(const MlpArchitecture& arch) {
  std::vector<DenseLayer> layers;
  for (auto [in, out] : arch.layer_shapes()) layers.emplace_back(in, out);
  return MlpParams(std::move(layers));
}

/// He initialization: weights ~ N(0, 2 / fan_in), biases zero.
inline MlpParams init_mlp(const MlpArchitecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.hidden_width == 0 || arch.output_dim == 0) {
    throw InvalidParameter("MLP dimensions must be positive");
  }
  MlpParams p = zero_mlp(arch);
  CounterRng rng(seed);
  for (auto& L : p.mutable_layers()) {
    const double sd = std::sqrt(2.0 / static_cast<double>(L.in));
    for (double& w : L.weight) w = sd * rng.normal();
  }
  return p;
}

/// Activations saved by a batched forward pass.
struct MlpCache {
  std::uint64_t generation = 0;
  std::size_t batch = 0;
  // activations[0] is the input; activations[l + 1] is the output of layer l
  // after its nonlinearity (the last one is the raw network output).
  std::vector<std::vector<double>> activations;

  [[nodiscard]] const std::vector<double>& output() const { return activations.back(); }
};

/// Batched forward; input is batch x input_dim row-major. Reuses cache storage.
inline void mlp_forward(const MlpParams& p, std::span<const double> input, std::size_t batch, MlpCache& cache) {
  const auto& layers = p.layers();
  if (layers.empty()) throw InvalidParameter("empty MLP");
  if (input.size() != batch * p.input_dim()) throw InvalidParameter("MLP input dimension mismatch");
  cache.generation = p.generation();
  cache.batch = batch;
  cache.activations.resize(layers.size() + 1);
  cache.activations[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& L = layers[l];
    const bool relu = l + 1 < layers.size();
    const std::vector<double>& a = cache.activations[l];
    std::vector<double>& z = cache.activations[l + 1];
    z.resize(batch * L.out);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* ab = a.data() + b * L.in;
      double* zb = z.data() + b * L.out;
      for (std::size_t o = 0; o < L.out; ++o) {
        const double* wrow = L.weight.data() + o * L.in;
        double s = L.bias[o];
        for (std::size_t i = 0; i < L.in; ++i) s += wrow[i] * ab[i];
        zb[o] = relu && s < 0.0 ? 0.0 : s;
      }
    }
  }
}

struct MlpForward {
  std::vector<double> output;
  MlpCache cache;
};

inline MlpForward mlp_forward(const MlpParams& p, std::span<const double> input) {
  MlpForward f;
  mlp_forward(p, input, 1, f.cache);
  f.output = f.cache.output();
  return f;
}

/// Accumulates scale * d(sum_b <output_b, grad_out_b>)/d(params) into param_grads
/// (when non-null) and writes d(...)/d(input) into input_grad (when non-null).
inline void mlp_backward_accumulate(const MlpParams& p, const MlpCache& cache, std::span<const double> grad_out,
                                    MlpGradients* param_grads, std::vector<double>* input_grad) {
  const auto& layers = p.layers();
  if (cache.generation != p.generation() || cache.activations.size() != layers.size() + 1) {
    throw ContractViolation("MLP cache is stale: parameters changed since the forward pass");
  }
  const std::size_t batch = cache.batch;
  if (grad_out.size() != batch * p.output_dim()) throw InvalidParameter("grad_out dimension mismatch");
  if (param_grads != nullptr && !param_grads->same_shape(p)) {
    throw InvalidParameter("gradient accumulator has the wrong shape");
  }

  std::vector<double> delta(grad_out.begin(), grad_out.end());
  std::vector<double> prev;
  std::vector<DenseLayer>* gl = param_grads != nullptr ? &param_grads->mutable_layers() : nullptr;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& L = layers[l];
    const std::vector<double>& a_in = cache.activations[l];
    if (l + 1 < layers.size()) {
      const std::vector<double>& a_out = cache.activations[l + 1];
      for (std::size_t k = 0; k < delta.size(); ++k)
        if (a_out[k] <= 0.0) delta[k] = 0.0;
    }
    if (gl != nullptr) {
      DenseLayer& G = (*gl)[l];
      for (std::size_t b = 0; b < batch; ++b) {
        const double* db = delta.data() + b * L.out;
        const double* ab = a_in.data() + b * L.in;
        for (std::size_t o = 0; o < L.out; ++o) {
          const double d = db[o];
          if (d == 0.0) continue;
          G.bias[o] += d;
          double* grow = G.weight.data() + o * L.in;
          for (std::size_t i = 0; i < L.in; ++i) grow[i] += d * ab[i];
        }
      }
    }
    if (l == 0 && input_grad == nullptr) break;
    prev.assign(batch * L.in, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* db = delta.data() + b * L.out;
      double* pb = prev.data() + b * L.in;
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = db[o];
        if (d == 0.0) continue;
        const double* wrow = L.weight.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) pb[i] += d * wrow[i];
      }
    }
    delta.swap(prev);
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
}

struct MlpBackward {
  MlpGradients params;
  std::vector<double> input;
};

inline MlpBackward mlp_backward(const MlpParams& p, const MlpCache& cache, std::span<const double> grad_out) {
  MlpBackward g{p.zeros_like(), {}};
  mlp_backward_accumulate(p, cache, grad_out, &g.params, &g.input);
  return g;
}

/// a += scale * b, shapes must agree.
inline void axpy(MlpGradients& a, double scale, const MlpGradients& b) {
  if (!a.same_shape(b)) throw InvalidParameter("gradient shapes differ");
  auto& al = a.mutable_layers();
  for (std::size_t l = 0; l < al.size(); ++l) {
    const auto& bl = b.layers()[l];
    for (std::size_t k = 0; k < bl.weight.size(); ++k) al[l].weight[k] += scale * bl.weight[k];
    for (std::size_t k = 0; k < bl.bias.size(); ++k) al[l].bias[k] += scale * bl.bias[k];
  }
}

inline void scale(MlpGradients& a, double s) {
  for (auto& L : a.mutable_layers()) {
    for (double& w : L.weight) w *= s;
    for (double& b : L.bias) b *= s;
  }
}

/// Visits every scalar parameter in a fixed order (layer, weights, biases).
template <typename F>
void for_each_parameter(MlpParams& p, F&& f) {
  for (auto& L : p.mutable_layers()) {
    for (double& w : L.weight) f(w);
    for (double& b : L.bias) f(b);
  }
}

template <typename F>
void for_each_parameter(const MlpParams& p, F&& f) {
  for (const auto& L : p.layers()) {
    for (double w : L.weight) f(w);
    for (double b : L.bias) f(b);
  }
}

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> v;
  v.reserve(p.parameter_count());
  for_each_parameter(p, [&](double x) { v.push_back(x); });
  return v;
}

struct AdamOptions {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const MlpParams& like) : first_moment(like.zeros_like()), second_moment(like.zeros_like()) {}
};

/// One bias-corrected Adam update of params in place.
inline void adam_step(AdamState& state, MlpParams& params, const MlpGradients& grads, double lr,
                      const AdamOptions& opt = {}) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw InvalidParameter("adam_step: shape mismatch between parameters, gradients and state");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  auto& pl = params.mutable_layers();
  auto& ml = state.first_moment.mutable_layers();
  auto& vl = state.second_moment.mutable_layers();
  const auto& gl = grads.layers();
  auto update = [&](std::vector<double>& theta, std::vector<double>& m, std::vector<double>& v,
                    const std::vector<double>& g) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      theta[k] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
    }
  };
  for (std::size_t l = 0; l < pl.size(); ++l) {
    update(pl[l].weight, ml[l].weight, vl[l].weight, gl[l].weight);
    update(pl[l].bias, ml[l].bias, vl[l].bias, gl[l].bias);
  }
}

inline nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : p.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t o = 0; o < L.out; ++o) {
      w.push_back(std::vector<double>(L.weight.begin() + static_cast<std::ptrdiff_t>(o * L.in),
                                      L.weight.begin() + static_cast<std::ptrdiff_t>((o + 1) * L.in)));
    }
    layers.push_back({{"weight", std::move(w)}, {"bias", L.bias}});
  }
  return layers;
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& jl : j) {
    const auto& w = jl.at("weight");
    const auto bias = jl.at("bias").get<std::vector<double>>();
    const std::size_t out = w.size();
    if (out == 0 || bias.size() != out) throw InvalidParameter("malformed MLP layer in JSON");
    const std::size_t in = w.at(0).size();
    DenseLayer L(in, out);
    for (std::size_t o = 0; o < out; ++o) {
      const auto row = w.at(o).get<std::vector<double>>();
      if (row.size() != in) throw InvalidParameter("ragged weight matrix in JSON");
      std::copy(row.begin(), row.end(), L.weight.begin() + static_cast<std::ptrdiff_t>(o * in));
    }
    L.bias = bias;
    layers.push_back(std::move(L));
  }
  return MlpParams(std::move(layers));
}

}  // namespace prlab
