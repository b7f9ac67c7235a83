#pragma once

// Primal network simplex for the dense transportation problem
//   min sum_ij P_ij C_ij  s.t.  P 1 = mu, P^T 1 = nu, P >= 0.
//
// Spanning-tree bookkeeping (parent/thread/succ_num/last_succ), strongly
// feasible leaving-arc selection and block-search pricing follow the classic
// LEMON formulation. Real arcs are implicit: arc e = i * m + j runs from
// supply node i to demand node n + j, so memory is O(n m) doubles for flows
// only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "prlab/error.hpp"

namespace prlab {

struct PlanEntry {
  std::size_t i;
  std::size_t j;
  double mass;
};

struct TransportResult {
  double cost = 0.0;      // sum of plan mass times ground cost (W_p^p)
  double distance = 0.0;  // W_p = cost^(1/p) when p is known, else cost
  int p = 1;
  std::vector<PlanEntry> plan;
  bool exact = true;
  bool converged = true;
  std::size_t iterations = 0;
  double runtime_ms = 0.0;
};

namespace detail {

class TransportSimplex {
 public:
  TransportSimplex(std::span<const double> supply, std::span<const double> demand, std::span<const double> cost)
      : n_(supply.size()), m_(demand.size()), cost_(cost) {
    node_num_ = n_ + m_;
    root_ = node_num_;
    arc_num_ = n_ * m_;
    const std::size_t all_arcs = arc_num_ + node_num_;
    flow_.assign(all_arcs, 0.0);
    state_.assign(all_arcs, kLower);
    art_src_.assign(node_num_, 0);
    art_tgt_.assign(node_num_, 0);
    art_cost_.assign(node_num_, 0.0);

    const std::size_t N = node_num_ + 1;
    supply_.assign(N, 0.0);
    pi_.assign(N, 0.0);
    parent_.assign(N, -1);
    pred_.assign(N, -1);
    thread_.assign(N, 0);
    rev_thread_.assign(N, 0);
    succ_num_.assign(N, 0);
    last_succ_.assign(N, 0);
    pred_dir_.assign(N, kUp);

    for (std::size_t i = 0; i < n_; ++i) supply_[i] = supply[i];
    for (std::size_t j = 0; j < m_; ++j) supply_[n_ + j] = -demand[j];

    double max_cost = 0.0;
    for (double c : cost_) max_cost = std::max(max_cost, std::abs(c));
    max_cost_ = max_cost;
    art_cost_value_ = (max_cost + 1.0) * static_cast<double>(node_num_);
    init_tree();

    block_size_ = std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(arc_num_)))));
  }

  /// Runs to optimality; returns false if artificial arcs still carry flow.
  bool solve(std::size_t max_iterations) {
    while (find_entering_arc()) {
      if (++iterations_ > max_iterations) return false;
      find_join_node();
      find_leaving_arc();
      change_flow();
      update_tree_structure();
      update_potential();
    }
    for (std::size_t k = 0; k < node_num_; ++k) {
      if (std::abs(flow_[arc_num_ + k]) > 1e-9) return false;
    }
    return true;
  }

  [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }
  [[nodiscard]] double flow(std::size_t i, std::size_t j) const { return flow_[i * m_ + j]; }

 private:
  static constexpr signed char kUpper = -1;
  static constexpr signed char kTree = 0;
  static constexpr signed char kLower = 1;
  static constexpr int kUp = 1;
  static constexpr int kDown = -1;

  [[nodiscard]] std::size_t src(std::size_t e) const { return e < arc_num_ ? e / m_ : art_src_[e - arc_num_]; }
  [[nodiscard]] std::size_t tgt(std::size_t e) const { return e < arc_num_ ? n_ + e % m_ : art_tgt_[e - arc_num_]; }
  [[nodiscard]] double arc_cost(std::size_t e) const { return e < arc_num_ ? cost_[e] : art_cost_[e - arc_num_]; }

  void init_tree() {
    const auto root = static_cast<long>(root_);
    parent_[root_] = -1;
    pred_[root_] = -1;
    thread_[root_] = 0;
    rev_thread_[0] = root;
    succ_num_[root_] = static_cast<long>(node_num_ + 1);
    last_succ_[root_] = root - 1;
    pi_[root_] = 0.0;
    for (std::size_t u = 0; u < node_num_; ++u) {
      const std::size_t e = arc_num_ + u;
      parent_[u] = root;
      pred_[u] = static_cast<long>(e);
      thread_[u] = static_cast<long>(u + 1);
      rev_thread_[u + 1] = static_cast<long>(u);
      succ_num_[u] = 1;
      last_succ_[u] = static_cast<long>(u);
      state_[e] = kTree;
      if (supply_[u] >= 0.0) {
        pred_dir_[u] = kUp;
        pi_[u] = 0.0;
        art_src_[u] = u;
        art_tgt_[u] = root_;
        flow_[e] = supply_[u];
        art_cost_[u] = 0.0;
      } else {
        pred_dir_[u] = kDown;
        pi_[u] = art_cost_value_;
        art_src_[u] = root_;
        art_tgt_[u] = u;
        flow_[e] = -supply_[u];
        art_cost_[u] = art_cost_value_;
      }
    }
  }

  // Block search pricing over the implicit real arcs.
  bool find_entering_arc() {
    const double tol = -1e-12 * std::max(1.0, max_cost_);
    double best = 0.0;
    std::size_t cnt = block_size_;
    std::size_t e = next_arc_;
    bool found = false;
    for (std::size_t visited = 0; visited < arc_num_; ++visited) {
      if (state_[e] != kTree) {
        const std::size_t i = e / m_;
        const std::size_t j = e - i * m_;
        const double c = state_[e] * (cost_[e] + pi_[i] - pi_[n_ + j]);
        if (c < best) {
          best = c;
          in_arc_ = e;
        }
      }
      if (++e == arc_num_) e = 0;
      if (--cnt == 0) {
        if (best < tol) {
          found = true;
          break;
        }
        cnt = block_size_;
      }
    }
    if (!found && best < tol) found = true;
    next_arc_ = e;
    return found;
  }

  void find_join_node() {
    auto u = static_cast<long>(src(in_arc_));
    auto v = static_cast<long>(tgt(in_arc_));
    while (u != v) {
      if (succ_num_[u] < succ_num_[v]) {
        u = parent_[u];
      } else {
        v = parent_[v];
      }
    }
    join_ = u;
  }

  void find_leaving_arc() {
    long first;
    long second;
    if (state_[in_arc_] == kLower) {
      first = static_cast<long>(src(in_arc_));
      second = static_cast<long>(tgt(in_arc_));
    } else {
      first = static_cast<long>(tgt(in_arc_));
      second = static_cast<long>(src(in_arc_));
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    delta_ = inf;
    int result = 0;
    for (long u = first; u != join_; u = parent_[u]) {
      const double d = pred_dir_[u] == kDown ? inf : flow_[pred_[u]];
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (long u = second; u != join_; u = parent_[u]) {
      const double d = pred_dir_[u] == kUp ? inf : flow_[pred_[u]];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) throw Error("network simplex: unbounded cycle (invalid cost matrix)");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
  }

  void change_flow() {
    if (delta_ > 0.0) {
      const double val = state_[in_arc_] * delta_;
      flow_[in_arc_] += val;
      for (auto u = static_cast<long>(src(in_arc_)); u != join_; u = parent_[u]) flow_[pred_[u]] -= pred_dir_[u] * val;
      for (auto u = static_cast<long>(tgt(in_arc_)); u != join_; u = parent_[u]) flow_[pred_[u]] += pred_dir_[u] * val;
    }
    state_[in_arc_] = kTree;
    state_[pred_[u_out_]] = kLower;
    flow_[pred_[u_out_]] = 0.0;
  }

  void update_tree_structure() {
    const long old_rev_thread = rev_thread_[u_out_];
    const long old_succ_num = succ_num_[u_out_];
    const long old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = static_cast<long>(in_arc_);
      pred_dir_[u_in_] = static_cast<std::size_t>(u_in_) == src(in_arc_) ? kUp : kDown;
      if (thread_[v_in_] != u_out_) {
        long after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const long thread_continue = old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

      long stem = u_in_;
      long par_stem = v_in_;
      long next_stem;
      long last = last_succ_[u_in_];
      long before;
      long after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);

        before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;

        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;

      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }

      for (long u : dirty_revs_) rev_thread_[thread_[u]] = u;

      long tmp_sc = 0;
      const long tmp_ls = last_succ_[u_out_];
      for (long u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
        pred_[u] = pred_[p];
        pred_dir_[u] = -pred_dir_[p];
        tmp_sc += succ_num_[u] - succ_num_[p];
        succ_num_[u] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = static_cast<long>(in_arc_);
      pred_dir_[u_in_] = static_cast<std::size_t>(u_in_) == src(in_arc_) ? kUp : kDown;
      succ_num_[u_in_] = old_succ_num;
    }

    const long up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const long last_succ_out = last_succ_[u_out_];
    for (long u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) last_succ_[u] = last_succ_out;

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (long u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
        last_succ_[u] = old_rev_thread;
      }
    } else if (last_succ_out != old_last_succ) {
      for (long u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
        last_succ_[u] = last_succ_out;
      }
    }

    for (long u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (long u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * arc_cost(in_arc_);
    const long end = thread_[last_succ_[u_in_]];
    for (long u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
  }

  std::size_t n_;
  std::size_t m_;
  std::span<const double> cost_;
  std::size_t node_num_ = 0;
  std::size_t root_ = 0;
  std::size_t arc_num_ = 0;
  double max_cost_ = 0.0;
  double art_cost_value_ = 0.0;

  std::vector<double> flow_;
  std::vector<signed char> state_;
  std::vector<std::size_t> art_src_;
  std::vector<std::size_t> art_tgt_;
  std::vector<double> art_cost_;

  std::vector<double> supply_;
  std::vector<double> pi_;
  std::vector<long> parent_;
  std::vector<long> pred_;
  std::vector<long> thread_;
  std::vector<long> rev_thread_;
  std::vector<long> succ_num_;
  std::vector<long> last_succ_;
  std::vector<int> pred_dir_;
  std::vector<long> dirty_revs_;

  std::size_t block_size_ = 10;
  std::size_t next_arc_ = 0;
  std::size_t in_arc_ = 0;
  long join_ = 0;
  long u_in_ = 0;
  long v_in_ = 0;
  long u_out_ = 0;
  long v_out_ = 0;
  double delta_ = 0.0;
  std::size_t iterations_ = 0;
};

}  // namespace detail

/// Exact discrete optimal transport between weight vectors mu (rows) and nu
/// (columns) for a row-major mu.size() x nu.size() cost matrix.
///
/// Zero-weight atoms are dropped before solving; the plan is reported in the
/// original indices. Both weight vectors must sum to 1 within 1e-9.
inline TransportResult exact_ot(std::span<const double> mu, std::span<const double> nu, std::span<const double> cost) {
  const auto t0 = std::chrono::steady_clock::now();
  if (mu.empty() || nu.empty()) throw InvalidParameter("exact_ot: empty weight vector");
  if (cost.size() != mu.size() * nu.size()) throw InvalidParameter("exact_ot: cost matrix shape mismatch");
  auto check = [](std::span<const double> w, const char* name) {
    double s = 0.0;
    for (double v : w) {
      if (!std::isfinite(v) || v < 0.0) throw InvalidParameter(std::string("exact_ot: ") + name + " has a negative or non-finite weight");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidParameter(std::string("exact_ot: ") + name + " does not sum to 1");
  };
  check(mu, "mu");
  check(nu, "nu");
  for (double c : cost) {
    if (!std::isfinite(c)) throw InvalidParameter("exact_ot: cost matrix has non-finite entries");
  }

  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (mu[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < nu.size(); ++j)
    if (nu[j] > 0.0) cols.push_back(j);

  std::vector<double> supply(rows.size());
  std::vector<double> demand(cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a) supply[a] = mu[rows[a]];
  for (std::size_t b = 0; b < cols.size(); ++b) demand[b] = nu[cols[b]];
  // Balance exactly: push the rounding discrepancy onto the largest demand.
  double diff = 0.0;
  for (double s : supply) diff += s;
  for (double d : demand) diff -= d;
  std::size_t biggest = static_cast<std::size_t>(std::max_element(demand.begin(), demand.end()) - demand.begin());
  demand[biggest] += diff;

  std::vector<double> compact;
  std::span<const double> solve_cost = cost;
  if (rows.size() != mu.size() || cols.size() != nu.size()) {
    compact.resize(rows.size() * cols.size());
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b) compact[a * cols.size() + b] = cost[rows[a] * nu.size() + cols[b]];
    solve_cost = compact;
  }

  detail::TransportSimplex simplex(supply, demand, solve_cost);
  const bool ok = simplex.solve(std::numeric_limits<std::size_t>::max() / 2);
  if (!ok) throw Error("exact_ot: network simplex ended with infeasible artificial flow");

  TransportResult result;
  result.exact = true;
  result.iterations = simplex.iterations();
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      const double f = simplex.flow(a, b);
      if (f > 0.0) {
        result.plan.push_back({rows[a], cols[b], f});
        result.cost += f * solve_cost[a * cols.size() + b];
      }
    }
  }
  result.distance = result.cost;
  result.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace prlab
