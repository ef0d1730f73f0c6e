// Primal network simplex for the dense transportation problem
//
//   minimize   sum_ij t_ij c(i, j)
//   subject to sum_j t_ij = supply_i,  sum_i t_ij = demand_j,  t_ij >= 0.
//
// The spanning-tree bookkeeping (thread / reverse thread / successor counts,
// strongly feasible leaving-arc rule, block-search pricing) follows the
// classic LEMON formulation. Arcs between every row and every column are
// implicit: only the current basis tree is stored, so memory is O(rows + cols)
// and costs are pulled from a callable on demand.
#pragma once

#include "letf/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace letf {

/// Raised by iterative solvers that exhaust their iteration budget.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double achieved) : Error(what), achieved_(achieved) {}
  /// Best error measure reached before giving up.
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

/// Row and column totals of a transport problem disagree.
class MarginalMismatchError : public Error {
 public:
  MarginalMismatchError(const std::string& what, double gap) : Error(what), gap_(gap) {}
  double gap() const { return gap_; }

 private:
  double gap_;
};

struct TransportEntry {
  Index row;
  Index col;
  double mass;
};

/// Sparse optimal plan with its dual certificate: c_ij >= u_i + v_j for all
/// pairs, with equality on the support.
struct TransportSolution {
  std::vector<TransportEntry> support;
  Vector row_duals;
  Vector col_duals;
  double objective = 0.0;
  std::int64_t pivots = 0;
};

namespace detail {

template <class CostFn>
class NetworkSimplex {
 public:
  NetworkSimplex(const Vector& supply, const Vector& demand, CostFn cost, double cost_bound)
      : rows_(supply.size()), cols_(demand.size()), cost_(std::move(cost)) {
    nodes_ = rows_ + cols_;
    root_ = nodes_;
    real_arcs_ = static_cast<std::int64_t>(rows_) * static_cast<std::int64_t>(cols_);
    art_cost_ = (std::max(cost_bound, 0.0) + 1.0) * static_cast<double>(nodes_);
    // Potentials reach the artificial cost, so their roundoff scales with it. A looser
    // threshold makes tied arcs (duplicate members) cycle on roundoff-level reduced costs.
    eps_ = 256.0 * std::numeric_limits<double>::epsilon() * art_cost_;
    flow_eps_ = 16.0 * std::numeric_limits<double>::epsilon() * std::max(supply.sum(), demand.sum());
    block_ = std::max<std::int64_t>(10, static_cast<std::int64_t>(std::sqrt(static_cast<double>(real_arcs_))));

    const std::size_t n = static_cast<std::size_t>(nodes_ + 1);
    parent_.assign(n, -1);
    pred_.assign(n, -1);
    thread_.assign(n, 0);
    rev_thread_.assign(n, 0);
    succ_num_.assign(n, 0);
    last_succ_.assign(n, 0);
    pred_dir_.assign(n, 0);
    pi_.assign(n, 0.0);
    pred_flow_.assign(n, 0.0);
    art_up_.assign(n, 0);

    std::vector<double> node_supply(n, 0.0);
    for (Index i = 0; i < rows_; ++i) node_supply[static_cast<std::size_t>(i)] = supply[i];
    for (Index j = 0; j < cols_; ++j) node_supply[static_cast<std::size_t>(rows_ + j)] = -demand[j];

    // Artificial starting tree: every node hangs off the root.
    parent_[root_] = -1;
    pred_[root_] = -1;
    thread_[root_] = 0;
    rev_thread_[0] = root_;
    succ_num_[root_] = nodes_ + 1;
    last_succ_[root_] = root_ - 1;
    pi_[root_] = 0.0;
    for (Index u = 0; u < nodes_; ++u) {
      const auto su = static_cast<std::size_t>(u);
      parent_[su] = root_;
      pred_[su] = real_arcs_ + u;
      thread_[su] = u + 1;
      rev_thread_[static_cast<std::size_t>(u + 1)] = u;
      succ_num_[su] = 1;
      last_succ_[su] = u;
      if (node_supply[su] >= 0.0) {
        art_up_[su] = 1;
        pred_dir_[su] = kUp;
        pi_[su] = 0.0;
        pred_flow_[su] = node_supply[su];
      } else {
        art_up_[su] = 0;
        pred_dir_[su] = kDown;
        pi_[su] = art_cost_;
        pred_flow_[su] = -node_supply[su];
      }
    }
  }

  TransportSolution solve(std::int64_t max_pivots) {
    std::int64_t pivots = 0;
    while (find_entering_arc()) {
      if (++pivots > max_pivots) throw NonConvergenceError("network simplex: pivot limit reached", 0.0);
      find_join_node();
      find_leaving_arc();
      change_flow();
      update_tree_structure();
      update_potential();
    }
    recompute_potentials();
    return extract(pivots);
  }

 private:
  static constexpr int kUp = 1;
  static constexpr int kDown = -1;

  Index src(std::int64_t arc) const {
    if (arc < real_arcs_) return static_cast<Index>(arc / cols_);
    const Index u = static_cast<Index>(arc - real_arcs_);
    return art_up_[static_cast<std::size_t>(u)] ? u : root_;
  }
  Index tgt(std::int64_t arc) const {
    if (arc < real_arcs_) return rows_ + static_cast<Index>(arc % cols_);
    const Index u = static_cast<Index>(arc - real_arcs_);
    return art_up_[static_cast<std::size_t>(u)] ? root_ : u;
  }
  double arc_cost(std::int64_t arc) const {
    if (arc < real_arcs_) return cost_(static_cast<Index>(arc / cols_), static_cast<Index>(arc % cols_));
    const Index u = static_cast<Index>(arc - real_arcs_);
    return art_up_[static_cast<std::size_t>(u)] ? 0.0 : art_cost_;
  }
  bool in_tree(std::int64_t arc) const {
    return pred_[static_cast<std::size_t>(src(arc))] == arc || pred_[static_cast<std::size_t>(tgt(arc))] == arc;
  }

  // Block search pricing over the real arcs.
  bool find_entering_arc() {
    if (real_arcs_ == 0) return false;
    double best = -eps_;
    std::int64_t best_arc = -1;
    std::int64_t count = block_;
    Index i = static_cast<Index>(next_arc_ / cols_);
    Index j = static_cast<Index>(next_arc_ % cols_);
    for (std::int64_t scanned = 0; scanned < real_arcs_; ++scanned) {
      const double rc = cost_(i, j) + pi_[static_cast<std::size_t>(i)] - pi_[static_cast<std::size_t>(rows_ + j)];
      if (rc < best) {
        const std::int64_t arc = static_cast<std::int64_t>(i) * cols_ + j;
        // Basic arcs have zero reduced cost up to roundoff; never let them re-enter.
        if (!in_tree(arc)) {
          best = rc;
          best_arc = arc;
        }
      }
      if (++j == cols_) {
        j = 0;
        if (++i == rows_) i = 0;
      }
      if (--count == 0) {
        if (best_arc >= 0) break;
        count = block_;
      }
    }
    if (best_arc < 0) return false;
    next_arc_ = static_cast<std::int64_t>(i) * cols_ + j;
    in_arc_ = best_arc;
    return true;
  }

  void find_join_node() {
    Index u = src(in_arc_);
    Index v = tgt(in_arc_);
    while (u != v) {
      if (succ_num_[static_cast<std::size_t>(u)] < succ_num_[static_cast<std::size_t>(v)])
        u = parent_[static_cast<std::size_t>(u)];
      else
        v = parent_[static_cast<std::size_t>(v)];
    }
    join_ = u;
  }

  // Entering arcs are always at their lower bound (flow 0, unbounded capacity).
  void find_leaving_arc() {
    const Index first = src(in_arc_);
    const Index second = tgt(in_arc_);
    delta_ = std::numeric_limits<double>::infinity();
    int result = 0;
    for (Index u = first; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
      const auto su = static_cast<std::size_t>(u);
      if (pred_dir_[su] == kDown) continue;  // flow increases, never limiting
      const double d = pred_flow_[su];
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (Index u = second; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
      const auto su = static_cast<std::size_t>(u);
      if (pred_dir_[su] == kUp) continue;
      const double d = pred_flow_[su];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) throw Error("network simplex: unbounded cycle (should not happen)");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
    delta_ = std::max(delta_, 0.0);
  }

  void adjust_flow(Index u, double change) {
    double& f = pred_flow_[static_cast<std::size_t>(u)];
    f += change;
    if (std::abs(f) <= flow_eps_) f = 0.0;
  }

  void change_flow() {
    in_flow_ = 0.0;
    if (delta_ > 0.0) {
      const double val = delta_;
      in_flow_ = val;
      // Roundoff residues are snapped to zero so that tied flows stay tied and
      // the strongly feasible tree rule keeps preventing cycling.
      for (Index u = src(in_arc_); u != join_; u = parent_[static_cast<std::size_t>(u)])
        adjust_flow(u, -pred_dir_[static_cast<std::size_t>(u)] * val);
      for (Index u = tgt(in_arc_); u != join_; u = parent_[static_cast<std::size_t>(u)])
        adjust_flow(u, pred_dir_[static_cast<std::size_t>(u)] * val);
    }
  }

  void update_tree_structure() {
    auto at = [](std::vector<Index>& v, Index k) -> Index& { return v[static_cast<std::size_t>(k)]; };

    const Index old_rev_thread = at(rev_thread_, u_out_);
    const Index old_succ_num = at(succ_num_, u_out_);
    const Index old_last_succ = at(last_succ_, u_out_);
    v_out_ = at(parent_, u_out_);

    if (u_in_ == u_out_) {
      at(parent_, u_in_) = v_in_;
      pred_[static_cast<std::size_t>(u_in_)] = in_arc_;
      pred_dir_[static_cast<std::size_t>(u_in_)] = (u_in_ == src(in_arc_)) ? kUp : kDown;
      pred_flow_[static_cast<std::size_t>(u_in_)] = in_flow_;

      if (at(thread_, v_in_) != u_out_) {
        Index after = at(thread_, old_last_succ);
        at(thread_, old_rev_thread) = after;
        at(rev_thread_, after) = old_rev_thread;
        after = at(thread_, v_in_);
        at(thread_, v_in_) = u_out_;
        at(rev_thread_, u_out_) = v_in_;
        at(thread_, old_last_succ) = after;
        at(rev_thread_, after) = old_last_succ;
      }
    } else {
      const Index thread_continue = old_rev_thread == v_in_ ? at(thread_, old_last_succ) : at(thread_, v_in_);

      Index stem = u_in_;
      Index par_stem = v_in_;
      Index next_stem;
      Index last = at(last_succ_, u_in_);
      Index before;
      Index after = at(thread_, last);
      at(thread_, v_in_) = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        next_stem = at(parent_, stem);
        at(thread_, last) = next_stem;
        dirty_revs_.push_back(last);

        before = at(rev_thread_, stem);
        at(thread_, before) = after;
        at(rev_thread_, after) = before;

        at(parent_, stem) = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = at(last_succ_, stem) == at(last_succ_, par_stem) ? at(rev_thread_, par_stem) : at(last_succ_, stem);
        after = at(thread_, last);
      }
      at(parent_, u_out_) = par_stem;
      at(thread_, last) = thread_continue;
      at(rev_thread_, thread_continue) = last;
      at(last_succ_, u_out_) = last;

      if (old_rev_thread != v_in_) {
        at(thread_, old_rev_thread) = after;
        at(rev_thread_, after) = old_rev_thread;
      }

      for (Index u : dirty_revs_) at(rev_thread_, at(thread_, u)) = u;

      Index tmp_sc = 0;
      const Index tmp_ls = at(last_succ_, u_out_);
      for (Index u = u_out_, p = at(parent_, u); u != u_in_; u = p, p = at(parent_, u)) {
        const auto su = static_cast<std::size_t>(u);
        const auto sp = static_cast<std::size_t>(p);
        pred_[su] = pred_[sp];
        pred_dir_[su] = -pred_dir_[sp];
        pred_flow_[su] = pred_flow_[sp];
        tmp_sc += succ_num_[su] - succ_num_[sp];
        succ_num_[su] = tmp_sc;
        last_succ_[sp] = tmp_ls;
      }
      pred_[static_cast<std::size_t>(u_in_)] = in_arc_;
      pred_dir_[static_cast<std::size_t>(u_in_)] = (u_in_ == src(in_arc_)) ? kUp : kDown;
      pred_flow_[static_cast<std::size_t>(u_in_)] = in_flow_;
      at(succ_num_, u_in_) = old_succ_num;
    }

    const Index up_limit_out = at(last_succ_, join_) == v_in_ ? join_ : -1;
    const Index last_succ_out = at(last_succ_, u_out_);
    for (Index u = v_in_; u != -1 && at(last_succ_, u) == v_in_; u = at(parent_, u)) at(last_succ_, u) = last_succ_out;

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (Index u = v_out_; u != up_limit_out && at(last_succ_, u) == old_last_succ; u = at(parent_, u))
        at(last_succ_, u) = old_rev_thread;
    } else if (last_succ_out != old_last_succ) {
      for (Index u = v_out_; u != up_limit_out && at(last_succ_, u) == old_last_succ; u = at(parent_, u))
        at(last_succ_, u) = last_succ_out;
    }

    for (Index u = v_in_; u != join_; u = at(parent_, u)) at(succ_num_, u) += old_succ_num;
    for (Index u = v_out_; u != join_; u = at(parent_, u)) at(succ_num_, u) -= old_succ_num;
  }

  void update_potential() {
    const auto su = static_cast<std::size_t>(u_in_);
    const double sigma = pi_[static_cast<std::size_t>(v_in_)] - pi_[su] - pred_dir_[su] * arc_cost(in_arc_);
    const Index end = thread_[static_cast<std::size_t>(last_succ_[su])];
    for (Index u = u_in_; u != end; u = thread_[static_cast<std::size_t>(u)]) pi_[static_cast<std::size_t>(u)] += sigma;
  }

  // Rebuild potentials from the final tree in thread (preorder) order, which
  // removes drift accumulated by incremental updates.
  void recompute_potentials() {
    pi_[static_cast<std::size_t>(root_)] = 0.0;
    for (Index u = thread_[static_cast<std::size_t>(root_)]; u != root_; u = thread_[static_cast<std::size_t>(u)]) {
      const auto su = static_cast<std::size_t>(u);
      const double parent_pi = pi_[static_cast<std::size_t>(parent_[su])];
      // reduced cost c + pi_src - pi_tgt vanishes on tree arcs
      pi_[su] = pred_dir_[su] == kUp ? parent_pi - arc_cost(pred_[su]) : parent_pi + arc_cost(pred_[su]);
    }
  }

  TransportSolution extract(std::int64_t pivots) const {
    TransportSolution sol;
    sol.pivots = pivots;
    sol.row_duals.resize(rows_);
    sol.col_duals.resize(cols_);
    for (Index i = 0; i < rows_; ++i) sol.row_duals[i] = -pi_[static_cast<std::size_t>(i)];
    for (Index j = 0; j < cols_; ++j) sol.col_duals[j] = pi_[static_cast<std::size_t>(rows_ + j)];
    // Shift so the duals are O(cost) rather than O(artificial cost).
    if (rows_ > 0) {
      const double shift = sol.row_duals.minCoeff();
      sol.row_duals.array() -= shift;
      sol.col_duals.array() += shift;
    }
    double objective = 0.0;
    for (Index u = 0; u < nodes_; ++u) {
      const auto su = static_cast<std::size_t>(u);
      const std::int64_t arc = pred_[su];
      if (arc >= real_arcs_) continue;
      const double mass = pred_flow_[su];
      if (!(mass > 0.0)) continue;
      const Index r = static_cast<Index>(arc / cols_);
      const Index c = static_cast<Index>(arc % cols_);
      sol.support.push_back({r, c, mass});
      objective += mass * cost_(r, c);
    }
    sol.objective = objective;
    return sol;
  }

  Index rows_;
  Index cols_;
  CostFn cost_;
  Index nodes_ = 0;
  Index root_ = 0;
  std::int64_t real_arcs_ = 0;
  double art_cost_ = 0.0;
  double eps_ = 0.0;
  double flow_eps_ = 0.0;
  std::int64_t block_ = 10;
  std::int64_t next_arc_ = 0;

  std::vector<Index> parent_, thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<std::int64_t> pred_;
  std::vector<int> pred_dir_;
  std::vector<double> pi_, pred_flow_;
  std::vector<char> art_up_;
  std::vector<Index> dirty_revs_;

  std::int64_t in_arc_ = -1;
  Index join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
  double delta_ = 0.0;
  double in_flow_ = 0.0;
};

}  // namespace detail

/// Exact optimal transport between `supply` (rows) and `demand` (columns) for
/// an arbitrary cost callable `cost(i, j)`; `cost_bound` must bound every
/// cost from above. Totals must agree within `tol`.
template <class CostFn>
TransportSolution solve_transport(const Vector& supply, const Vector& demand, CostFn cost, double cost_bound,
                                  double tol = 1e-9);

template <class CostFn>
TransportSolution solve_transport(const Vector& supply, const Vector& demand, CostFn cost, double cost_bound,
                                  double tol) {
  if (supply.size() < 1 || demand.size() < 1) throw InvalidArgumentError("transport: empty marginal");
  if (!supply.allFinite() || !demand.allFinite() || (supply.array() < 0.0).any() || (demand.array() < 0.0).any())
    throw InvalidArgumentError("transport: marginals must be finite and nonnegative");
  const double gap = std::abs(supply.sum() - demand.sum());
  if (gap > tol) throw MarginalMismatchError("transport: row and column totals differ", gap);
  detail::NetworkSimplex<CostFn> simplex(supply, demand, std::move(cost), cost_bound);
  const std::int64_t n = supply.size() + demand.size();
  const std::int64_t limit = std::max<std::int64_t>(100000, 2000 * n * n);
  return simplex.solve(limit);
}

}  // namespace letf
