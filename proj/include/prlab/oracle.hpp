#pragma once

// Exhaustive check of the perception-robustness bound on finite models:
// every deterministic map y -> x_vals is enumerated, its Lipschitz constant K
// and joint W_p are computed exactly, and K is compared with the lower bound
// g(W_p) built from certified ill-posedness constants. All norms are L2, so
// the norm-equivalence constants are 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "prlab/error.hpp"
#include "prlab/model.hpp"
#include "prlab/network_simplex.hpp"
#include "prlab/transport.hpp"

namespace prlab {

/// A deterministic map stored as the x index chosen for each y index.
using DiscreteMap = std::vector<std::size_t>;

inline constexpr std::uint64_t kEnumerationGuard = 1000000;

/// All |x|^|y| maps in lexicographic order of (g(y_0), g(y_1), ...).
class DeterministicMaps {
 public:
  explicit DeterministicMaps(const DiscreteJointModel& model) : nx_(model.x_size()), ny_(model.y_size()) {
    count_ = 1;
    for (std::size_t j = 0; j < ny_; ++j) {
      if (count_ > kEnumerationGuard / nx_) {
        throw TooLarge("enumeration of " + std::to_string(nx_) + "^" + std::to_string(ny_) +
                       " maps exceeds the guard of 1e6");
      }
      count_ *= nx_;
    }
  }

  [[nodiscard]] std::uint64_t size() const noexcept { return count_; }

  [[nodiscard]] DiscreteMap at(std::uint64_t id) const {
    if (id >= count_) throw InvalidParameter("map id out of range");
    DiscreteMap g(ny_);
    for (std::size_t j = ny_; j-- > 0;) {
      g[j] = static_cast<std::size_t>(id % nx_);
      id /= nx_;
    }
    return g;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    DiscreteMap g(ny_, 0);
    for (std::uint64_t id = 0; id < count_; ++id) {
      fn(id, static_cast<const DiscreteMap&>(g));
      for (std::size_t j = ny_; j-- > 0;) {
        if (++g[j] < nx_) break;
        g[j] = 0;
      }
    }
  }

 private:
  std::size_t nx_;
  std::size_t ny_;
  std::uint64_t count_ = 0;
};

inline DeterministicMaps enumerate_deterministic(const DiscreteJointModel& model) { return DeterministicMaps(model); }

namespace detail {

inline void check_map(const DiscreteMap& g, const DiscreteJointModel& model) {
  if (g.size() != model.y_size()) throw InvalidParameter("map must assign one x index per y value");
  for (std::size_t xi : g)
    if (xi >= model.x_size()) throw InvalidParameter("map x index out of range");
}

}  // namespace detail

/// max |g(y_j) - g(y_l)| / |y_j - y_l| over pairs of measurements with
/// positive marginal.
inline double lipschitz_discrete(const DiscreteMap& g, const DiscreteJointModel& model) {
  detail::check_map(g, model);
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < model.y_size(); ++j)
    if (model.y_marginal()[j] > 0.0) support.push_back(j);
  if (support.size() < 2) throw InvalidParameter("Lipschitz constant needs at least two measurement atoms");
  const auto& xv = model.x_vals();
  const auto& yv = model.y_vals();
  double K = 0.0;
  for (std::size_t a = 0; a < support.size(); ++a) {
    for (std::size_t b = a + 1; b < support.size(); ++b) {
      const std::size_t j = support[a];
      const std::size_t l = support[b];
      K = std::max(K, std::abs(xv[g[j]] - xv[g[l]]) / std::abs(yv[j] - yv[l]));
    }
  }
  return K;
}

/// Point sets for p(X, Y) (masses = pmf) and p(g(Y), Y) (masses = p_Y).
inline std::pair<WeightedPointSet, WeightedPointSet> map_joint_sets(const DiscreteMap& g,
                                                                    const DiscreteJointModel& model) {
  detail::check_map(g, model);
  WeightedPointSet joint;
  WeightedPointSet mapped;
  joint.dim = 2;
  mapped.dim = 2;
  for (std::size_t i = 0; i < model.x_size(); ++i) {
    for (std::size_t j = 0; j < model.y_size(); ++j) {
      if (model.mass(i, j) > 0.0) {
        joint.points.insert(joint.points.end(), {model.x_vals()[i], model.y_vals()[j]});
        joint.weights.push_back(model.mass(i, j));
      }
    }
  }
  for (std::size_t j = 0; j < model.y_size(); ++j) {
    if (model.y_marginal()[j] > 0.0) {
      mapped.points.insert(mapped.points.end(), {model.x_vals()[g[j]], model.y_vals()[j]});
      mapped.weights.push_back(model.y_marginal()[j]);
    }
  }
  return {std::move(joint), std::move(mapped)};
}

/// Exact W_p between p(X, Y) and p(g(Y), Y) with L2 ground cost.
inline TransportResult wasserstein_of_map(const DiscreteMap& g, const DiscreteJointModel& model, int p,
                                          GroundNorm ground = GroundNorm::L2) {
  const auto [joint, mapped] = map_joint_sets(g, model);
  const CostMatrix C = cost_matrix(joint, mapped, ground, p);
  TransportResult r = exact_ot(joint.weights, mapped.weights, C.data);
  r.p = p;
  r.distance = p == 1 ? r.cost : std::pow(std::max(0.0, r.cost), 1.0 / p);
  return r;
}

struct WitnessPair {
  std::size_t y_index;
  std::size_t x1;  // Q1 = {x_vals[x1]}
  std::size_t x2;  // Q2 = {x_vals[x2]}
};

struct BoundConstants {
  double beta = 0.0;
  double k = 0.0;
  double p_sy = 0.0;
  int p = 1;
  std::vector<std::size_t> sy_indices;
  std::vector<WitnessPair> witnesses;
};

/// Searches every (beta, k) with beta a pairwise x distance and k a posterior
/// mass. For each candidate, S_y collects the measurements whose posterior
/// has two atoms of mass >= k at distance >= beta. The returned candidate
/// maximizes beta * (k * P(S_y))^(1/p), which is the candidate with the
/// largest bound g for every epsilon and gamma.
inline BoundConstants certify_constants(const DiscreteJointModel& model, int p = 1) {
  if (p < 1) throw InvalidParameter("certify_constants: p must be at least 1");
  if (model.invertible()) throw PreconditionFailed("model is invertible: every posterior is a point mass");
  const auto& xv = model.x_vals();
  std::vector<double> betas;
  for (std::size_t a = 0; a < xv.size(); ++a)
    for (std::size_t b = a + 1; b < xv.size(); ++b) betas.push_back(std::abs(xv[b] - xv[a]));
  std::vector<std::vector<double>> posts(model.y_size());
  std::vector<double> ks;
  for (std::size_t j = 0; j < model.y_size(); ++j) {
    if (!(model.y_marginal()[j] > 0.0)) continue;
    posts[j] = model.posterior(j);
    for (double m : posts[j])
      if (m > 0.0) ks.push_back(m);
  }
  auto uniq_desc = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end(), std::greater<>());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq_desc(betas);
  uniq_desc(ks);

  BoundConstants best;
  double best_score = -1.0;
  for (double beta : betas) {
    for (double k : ks) {
      BoundConstants c;
      c.beta = beta;
      c.k = k;
      c.p = p;
      for (std::size_t j = 0; j < model.y_size(); ++j) {
        if (posts[j].empty()) continue;
        bool found = false;
        for (std::size_t a = 0; a < xv.size() && !found; ++a) {
          for (std::size_t b = a + 1; b < xv.size() && !found; ++b) {
            if (posts[j][a] >= k && posts[j][b] >= k && std::abs(xv[b] - xv[a]) >= beta) {
              c.witnesses.push_back({j, a, b});
              c.sy_indices.push_back(j);
              c.p_sy += model.y_marginal()[j];
              found = true;
            }
          }
        }
      }
      if (!(c.p_sy > 0.0)) continue;
      const double score = beta * std::pow(k * c.p_sy, 1.0 / p);
      if (score > best_score) {
        best_score = score;
        best = std::move(c);
      }
    }
  }
  if (best_score < 0.0) throw PreconditionFailed("no ill-posedness certificate found");
  return best;
}

/// t = (2 gamma^(p/2) / (k P(S_y)))^(1/p) (1 + 1e-6), so that
/// gamma^(p/2) / (k t^p) < P(S_y) / 2 holds strictly.
inline double bound_t(const BoundConstants& c, int p, double gamma) {
  return std::pow(2.0 * std::pow(gamma, 0.5 * p) / (c.k * c.p_sy), 1.0 / p) * (1.0 + 1e-6);
}

/// g(eps) = (beta - 2 t sqrt(eps)) / (2 t sqrt(eps)); non-positive values are
/// vacuous.
inline double bound_g(const BoundConstants& c, int p, double epsilon, double gamma) {
  if (!(epsilon > 0.0)) throw InvalidParameter("bound_g: epsilon must be positive");
  if (epsilon > gamma) throw InvalidParameter("bound_g: epsilon must not exceed gamma");
  const double t = bound_t(c, p, gamma);
  const double d = 2.0 * t * std::sqrt(epsilon);
  return (c.beta - d) / d;
}

enum class GammaPolicy { Global, PerMap };

inline const char* to_string(GammaPolicy g) { return g == GammaPolicy::Global ? "global" : "per-map"; }

struct MapRecord {
  std::uint64_t map_id = 0;
  DiscreteMap map;
  double wp = 0.0;
  double k = 0.0;
  double g = 0.0;
  double t = 0.0;
  double gamma = 0.0;
  bool satisfied = false;
  bool plan_certified = false;  // plan feasible and its cost matches within 1e-9
};

struct TheoremReport {
  int p = 1;
  GammaPolicy policy = GammaPolicy::Global;
  BoundConstants constants;
  double gamma = 0.0;  // global policy: the gamma used for every map; per-map: the largest
  double t = 0.0;      // t at `gamma`
  double min_wp = 0.0;
  bool all_satisfied = false;
  std::vector<MapRecord> records;
};

namespace detail {

inline bool plan_certifies(const TransportResult& r, const WeightedPointSet& a, const WeightedPointSet& b,
                           const CostMatrix& C) {
  std::vector<double> rows(a.size(), 0.0);
  std::vector<double> cols(b.size(), 0.0);
  double cost = 0.0;
  for (const auto& e : r.plan) {
    if (e.mass < 0.0) return false;
    rows[e.i] += e.mass;
    cols[e.j] += e.mass;
    cost += e.mass * C(e.i, e.j);
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(rows[i] - a.weights[i]) > 1e-9) return false;
  for (std::size_t j = 0; j < b.size(); ++j)
    if (std::abs(cols[j] - b.weights[j]) > 1e-9) return false;
  return std::abs(cost - r.cost) <= 1e-9;
}

}  // namespace detail

/// Computes W_p, K and the bound for every deterministic map without
/// asserting anything.
inline TheoremReport theorem_report(const DiscreteJointModel& model, int p, GammaPolicy policy = GammaPolicy::Global) {
  if (p < 1) throw InvalidParameter("p must be at least 1");
  if (model.invertible()) throw PreconditionFailed("model is invertible: the theorem does not apply");
  const DeterministicMaps maps(model);
  TheoremReport rep;
  rep.p = p;
  rep.policy = policy;
  rep.constants = certify_constants(model, p);
  rep.records.reserve(maps.size());
  maps.for_each([&](std::uint64_t id, const DiscreteMap& g) {
    MapRecord rec;
    rec.map_id = id;
    rec.map = g;
    const auto [joint, mapped] = map_joint_sets(g, model);
    const CostMatrix C = cost_matrix(joint, mapped, GroundNorm::L2, p);
    const TransportResult tr = exact_ot(joint.weights, mapped.weights, C.data);
    rec.plan_certified = detail::plan_certifies(tr, joint, mapped, C);
    rec.wp = p == 1 ? tr.cost : std::pow(std::max(0.0, tr.cost), 1.0 / p);
    rec.k = lipschitz_discrete(g, model);
    rep.records.push_back(std::move(rec));
  });
  rep.min_wp = std::numeric_limits<double>::infinity();
  double max_wp = 0.0;
  for (const auto& r : rep.records) {
    rep.min_wp = std::min(rep.min_wp, r.wp);
    max_wp = std::max(max_wp, r.wp);
  }
  rep.gamma = max_wp;
  rep.t = max_wp > 0.0 ? bound_t(rep.constants, p, max_wp) : 0.0;
  rep.all_satisfied = rep.min_wp > 0.0;
  for (auto& r : rep.records) {
    r.gamma = policy == GammaPolicy::Global ? max_wp : r.wp;
    if (r.wp > 0.0) {
      r.t = bound_t(rep.constants, p, r.gamma);
      r.g = bound_g(rep.constants, p, r.wp, r.gamma);
      r.satisfied = r.plan_certified && r.k >= std::max(0.0, r.g);
    } else {
      r.g = std::numeric_limits<double>::infinity();
      r.satisfied = false;
    }
    rep.all_satisfied = rep.all_satisfied && r.satisfied;
  }
  return rep;
}

/// theorem_report plus the assertions: min W_p > 0 and K >= max(0, g(W_p))
/// for every map. The first violation is raised with its map.
inline TheoremReport verify_theorem(const DiscreteJointModel& model, int p, GammaPolicy policy = GammaPolicy::Global) {
  TheoremReport rep = theorem_report(model, p, policy);
  for (const auto& r : rep.records) {
    if (!(r.wp > 0.0)) {
      throw VerificationFailure("a deterministic map reproduces the joint distribution (W_p = 0)", r.map);
    }
    if (!r.plan_certified) throw VerificationFailure("transport plan does not certify W_p", r.map);
    if (!r.satisfied) {
      throw VerificationFailure("Lipschitz constant " + std::to_string(r.k) + " is below the bound " +
                                    std::to_string(r.g),
                                r.map);
    }
  }
  return rep;
}

/// Smallest K among maps with W_p <= w, evaluated at each distinct W_p in
/// increasing order: the discrete tradeoff frontier.
inline std::vector<std::pair<double, double>> pareto_frontier(const TheoremReport& rep) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rep.records) pts.emplace_back(r.wp, r.k);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [w, k] : pts) {
    best = std::min(best, k);
    if (!out.empty() && out.back().first == w) {
      out.back().second = best;
    } else {
      out.emplace_back(w, best);
    }
  }
  return out;
}

}  // namespace prlab
