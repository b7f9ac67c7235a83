#pragma once

// Wasserstein distances between empirical measures: exact (network simplex),
// entropic (log-domain Sinkhorn), the sorted 1-D closed form, and the
// Gaussian (Frechet) closed form. JEMD measures an estimator's joint law
// p(x_hat, y) against p(x, y) for the Gaussian toy.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prlab/error.hpp"
#include "prlab/estimator.hpp"
#include "prlab/model.hpp"
#include "prlab/network_simplex.hpp"
#include "prlab/random.hpp"

namespace prlab {

enum class GroundNorm { L1, L2 };

inline const char* to_string(GroundNorm g) { return g == GroundNorm::L1 ? "l1" : "l2"; }

inline GroundNorm parse_ground(const std::string& s) {
  if (s == "l1" || s == "L1") return GroundNorm::L1;
  if (s == "l2" || s == "L2") return GroundNorm::L2;
  throw InvalidParameter("unknown ground norm '" + s + "' (expected l1 or l2)");
}

/// n points in R^dim (row-major) with probability weights.
struct WeightedPointSet {
  std::size_t dim = 0;
  std::vector<double> points;
  std::vector<double> weights;

  WeightedPointSet() = default;
  WeightedPointSet(std::size_t d, std::vector<double> pts, std::vector<double> w)
      : dim(d), points(std::move(pts)), weights(std::move(w)) {
    validate();
  }

  /// Equal weights 1/n.
  static WeightedPointSet uniform(std::size_t d, std::vector<double> pts) {
    if (d == 0 || pts.empty() || pts.size() % d != 0) throw InvalidParameter("point array does not match dimension");
    const std::size_t n = pts.size() / d;
    return {d, std::move(pts), std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }

  [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }
  [[nodiscard]] std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }

  void validate() const {
    if (dim == 0 || weights.empty() || points.size() != weights.size() * dim) {
      throw InvalidParameter("point set shape is inconsistent");
    }
    for (double v : points)
      if (!std::isfinite(v)) throw InvalidParameter("point coordinates must be finite");
    double s = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) throw InvalidParameter("weights must be finite and nonnegative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12 * static_cast<double>(std::max<std::size_t>(1, weights.size()))) {
      throw InvalidParameter("weights must sum to 1");
    }
  }
};

/// Merges identical points (summing weights) and drops zero-weight points.
inline WeightedPointSet aggregate(const WeightedPointSet& s) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.weights[i] > 0.0) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = s.point(a);
    const auto pb = s.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  });
  WeightedPointSet out;
  out.dim = s.dim;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto p = s.point(order[k]);
    if (k > 0 && std::equal(p.begin(), p.end(), s.point(order[k - 1]).begin())) {
      out.weights.back() += s.weights[order[k]];
    } else {
      out.points.insert(out.points.end(), p.begin(), p.end());
      out.weights.push_back(s.weights[order[k]]);
    }
  }
  return out;
}

struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline double ground_distance(std::span<const double> a, std::span<const double> b, GroundNorm ground) {
  double s = 0.0;
  if (ground == GroundNorm::L1) {
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s;
  }
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// Entry (i, j) = |a_i - b_j|_ground ^ p.
inline CostMatrix cost_matrix(const WeightedPointSet& A, const WeightedPointSet& B, GroundNorm ground, int p) {
  if (A.dim != B.dim) throw InvalidParameter("cost_matrix: point dimensions differ");
  if (p != 1 && p != 2) throw InvalidParameter("cost_matrix: p must be 1 or 2");
  CostMatrix C{A.size(), B.size(), std::vector<double>(A.size() * B.size())};
  for (std::size_t i = 0; i < A.size(); ++i) {
    const auto a = A.point(i);
    for (std::size_t j = 0; j < B.size(); ++j) {
      const double d = ground_distance(a, B.point(j), ground);
      C.data[i * C.cols + j] = p == 1 ? d : d * d;
    }
  }
  return C;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidParameter("median of an empty array");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// W1 between equal-size, equal-weight 1-D samples: mean |sorted a - sorted b|.
inline double w1_sorted_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw InvalidParameter("w1_sorted_1d: sample sizes differ");
  if (a.empty()) throw InvalidParameter("w1_sorted_1d: empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

struct SinkhornOptions {
  double epsilon = 0.0;  // absolute regularization; must be positive
  std::size_t max_iters = 10000;
  double tol = 1e-6;     // L1 row-marginal violation
  bool epsilon_scaling = true;
};

struct SinkhornResult {
  /// Unregularized dual value of the c-transformed potentials; a lower
  /// bound on the exact cost.
  double cost = 0.0;
  double primal_cost = 0.0;  // <P, C> of the entropic plan; an upper bound
  double dual_cost = 0.0;    // <f, mu> + <g, nu> of the entropic potentials
  std::vector<double> f;
  std::vector<double> g;
  bool converged = false;
  double marginal_error = 0.0;
  std::size_t iterations = 0;
  double runtime_ms = 0.0;
};

/// Entropic OT with plan P_ij = exp((f_i + g_j - C_ij) / epsilon).
///
/// Potentials f, g live in the log domain; inner iterations run ordinary
/// scaling updates on the kernel exp((f_i + g_j - C_ij) / epsilon) and fold
/// the scalings back into the potentials whenever they grow large (and at
/// every stage change). Epsilon is optionally annealed geometrically from the
/// largest cost down to the target. Non-convergence is reported via the flag.
inline SinkhornResult sinkhorn(std::span<const double> mu, std::span<const double> nu, const CostMatrix& C,
                               const SinkhornOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(opt.epsilon > 0.0)) throw InvalidParameter("sinkhorn: epsilon must be positive");
  if (mu.size() != C.rows || nu.size() != C.cols) throw InvalidParameter("sinkhorn: shape mismatch");
  for (double w : mu)
    if (!(w > 0.0)) throw InvalidParameter("sinkhorn: weights must be positive");
  for (double w : nu)
    if (!(w > 0.0)) throw InvalidParameter("sinkhorn: weights must be positive");
  const auto n = static_cast<Eigen::Index>(C.rows);
  const auto m = static_cast<Eigen::Index>(C.cols);
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> cost(C.data.data(), n, m);
  const Eigen::Map<const Eigen::VectorXd> a(mu.data(), n);
  const Eigen::Map<const Eigen::VectorXd> b(nu.data(), m);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
  RowMat K(n, m);
  SinkhornResult r;

  auto absorb = [&](double eps) {
    f.array() += eps * u.array().log();
    g.array() += eps * v.array().log();
    u.setOnes();
    v.setOnes();
  };
  auto rebuild = [&](double eps) {
    K = ((f.replicate(1, m) + g.transpose().replicate(n, 1) - cost) / eps).array().exp().matrix();
  };
  auto row_violation = [&]() { return (u.cwiseProduct(K * v) - a).lpNorm<1>(); };

  double cmax = C.data.empty() ? 0.0 : *std::max_element(C.data.begin(), C.data.end());
  std::vector<double> schedule;
  if (opt.epsilon_scaling) {
    for (double e = cmax; e > opt.epsilon; e *= 0.5) schedule.push_back(e);
  }
  schedule.push_back(opt.epsilon);

  constexpr double kAbsorbAt = 1e50;
  for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
    const double eps = schedule[stage];
    const bool last = stage + 1 == schedule.size();
    absorb(stage == 0 ? eps : schedule[stage - 1]);
    rebuild(eps);
    const double stage_tol = last ? opt.tol : std::max(opt.tol, 1e-4);
    while (r.iterations < opt.max_iters) {
      u = a.cwiseQuotient(K * v);
      v = b.cwiseQuotient(K.transpose() * u);
      ++r.iterations;
      if (!u.allFinite() || !v.allFinite() || u.maxCoeff() > kAbsorbAt || v.maxCoeff() > kAbsorbAt ||
          u.minCoeff() < 1.0 / kAbsorbAt || v.minCoeff() < 1.0 / kAbsorbAt) {
        if (!u.allFinite() || !v.allFinite()) {
          u.setOnes();
          v.setOnes();
        }
        absorb(eps);
        rebuild(eps);
        continue;
      }
      if (r.iterations % 10 == 0) {
        r.marginal_error = row_violation();
        if (r.marginal_error < stage_tol) break;
      }
    }
  }
  r.marginal_error = row_violation();
  r.converged = r.marginal_error < opt.tol;
  const RowMat plan = u.asDiagonal() * K * v.asDiagonal();
  r.primal_cost = plan.cwiseProduct(cost).sum();
  absorb(opt.epsilon);
  // Feasible dual pair: fc = (g)^c over rows, then gc = (fc)^c over columns.
  const Eigen::VectorXd fc = (cost - g.transpose().replicate(n, 1)).rowwise().minCoeff();
  const Eigen::VectorXd gc = (cost - fc.replicate(1, m)).colwise().minCoeff().transpose();
  r.cost = a.dot(fc) + b.dot(gc);
  // (f + c, g - c) is the same solution; pick <f, mu> = <g, nu>.
  const double shift = 0.5 * (b.dot(g) - a.dot(f));
  f.array() += shift;
  g.array() -= shift;
  r.dual_cost = a.dot(f) + b.dot(g);
  r.f.assign(f.data(), f.data() + n);
  r.g.assign(g.data(), g.data() + m);
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

enum class OtSolver { Auto, Exact, Sinkhorn };

struct WassersteinOptions {
  GroundNorm ground = GroundNorm::L1;
  int p = 1;
  OtSolver solver = OtSolver::Auto;
  std::size_t exact_limit = 2000;         // Auto switches to Sinkhorn above this many points
  double sinkhorn_relative_epsilon = 1e-2;  // epsilon = this * median cost
  std::size_t sinkhorn_max_iters = 10000;
  double sinkhorn_tol = 1e-6;
};

/// W_p between two weighted point sets; duplicates are merged first.
inline TransportResult wasserstein(const WeightedPointSet& A, const WeightedPointSet& B,
                                   const WassersteinOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  A.validate();
  B.validate();
  const WeightedPointSet a = aggregate(A);
  const WeightedPointSet b = aggregate(B);
  const CostMatrix C = cost_matrix(a, b, opt.ground, opt.p);
  const bool use_exact = opt.solver == OtSolver::Exact ||
                         (opt.solver == OtSolver::Auto && std::max(A.size(), B.size()) <= opt.exact_limit);
  TransportResult r;
  if (use_exact) {
    r = exact_ot(a.weights, b.weights, C.data);
  } else {
    SinkhornOptions so;
    so.epsilon = opt.sinkhorn_relative_epsilon * median(C.data);
    if (!(so.epsilon > 0.0)) so.epsilon = opt.sinkhorn_relative_epsilon;
    so.max_iters = opt.sinkhorn_max_iters;
    so.tol = opt.sinkhorn_tol;
    const SinkhornResult s = sinkhorn(a.weights, b.weights, C, so);
    r.cost = s.cost;
    r.exact = false;
    r.converged = s.converged;
    r.iterations = s.iterations;
  }
  r.p = opt.p;
  r.distance = opt.p == 1 ? r.cost : std::pow(std::max(0.0, r.cost), 1.0 / opt.p);
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw InvalidParameter("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] < -1e-10) throw InvalidParameter("matrix is not positive semidefinite");
    ev[k] = std::sqrt(std::max(0.0, ev[k]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Closed-form W2 between N(mu1, cov1) and N(mu2, cov2) (the Frechet distance,
/// square-rooted).
inline double gaussian_w2(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                          const Eigen::MatrixXd& cov2) {
  const auto d = mu1.size();
  if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d) {
    throw InvalidParameter("gaussian_w2: dimension mismatch");
  }
  if (!cov1.isApprox(cov1.transpose(), 1e-12) || !cov2.isApprox(cov2.transpose(), 1e-12)) {
    throw InvalidParameter("gaussian_w2: covariances must be symmetric");
  }
  const Eigen::MatrixXd s1 = detail::psd_sqrt(cov1);
  detail::psd_sqrt(cov2);
  Eigen::MatrixXd cross = s1 * cov2 * s1;
  cross = 0.5 * (cross + cross.transpose());
  const Eigen::MatrixXd cross_sqrt = detail::psd_sqrt(cross);
  const double w2sq = (mu1 - mu2).squaredNorm() + (cov1 + cov2 - 2.0 * cross_sqrt).trace();
  return std::sqrt(std::max(0.0, w2sq));
}

struct JemdOptions {
  WassersteinOptions transport{};
  /// Reuse the reference draw's y values for the estimator set instead of an
  /// independent fresh y sample.
  bool paired = false;
};

/// Reference set {(x_i, y_i)} and estimator set {(f(y'_i), y'_i)} as
/// equal-weight points in R^2.
struct JointPointSets {
  WeightedPointSet reference;
  WeightedPointSet estimated;
};

inline WeightedPointSet joint_points(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw InvalidParameter("joint_points: size mismatch");
  std::vector<double> pts(2 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    pts[2 * i] = x[i];
    pts[2 * i + 1] = y[i];
  }
  return WeightedPointSet::uniform(2, std::move(pts));
}

inline JointPointSets jemd_point_sets(const Estimator& e, const GaussianToyModel& model, std::size_t n,
                                      std::uint64_t seed, bool paired) {
  if (n == 0) throw InvalidParameter("jemd: n must be at least 1");
  e.require_deterministic("jemd");
  const EmpiricalJointSample ref = sample_joint(model, n, resolve_seeds(seed, "jemd/reference"));
  const std::vector<double> y_est = paired ? ref.y : sample_measurements(model, n, resolve_seeds(seed, "jemd/estimator"));
  const std::vector<double> x_est = e.evaluate_batch(y_est);
  return {joint_points(ref.x, ref.y), joint_points(x_est, y_est)};
}

inline TransportResult jemd_detail(const Estimator& e, const GaussianToyModel& model, std::size_t n, std::uint64_t seed,
                                   const JemdOptions& opt = {}) {
  const JointPointSets sets = jemd_point_sets(e, model, n, seed, opt.paired);
  return wasserstein(sets.reference, sets.estimated, opt.transport);
}

/// Joint earth mover's distance between p(f(Y), Y) and p(X, Y) from n samples.
inline double jemd(const Estimator& e, const GaussianToyModel& model, std::size_t n, std::uint64_t seed,
                   const JemdOptions& opt = {}) {
  return jemd_detail(e, model, n, seed, opt).distance;
}

}  // namespace prlab
