#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hazdid/error.hpp"

namespace hazdid {

// Constraint set for  min_x sum_r w_r (a_r . x - b_r)^2.
//   fixed:      x_j = v
//   nonnegative: x_j >= 0 for j in the set
//   sum_to_one: sum_{j in set} x_j = 1 (fixed members count toward the sum)
struct LsqConstraints {
  std::map<int, double> fixed;
  std::set<int> nonnegative;
  std::set<int> sum_to_one;
};

struct LsqSolution {
  Eigen::VectorXd x;
  std::set<int> active;  // nonnegativity constraints binding at the solution
  double objective = 0;
  int iterations = 0;
};

namespace detail {

// Equality-constrained subproblem over `free` columns with the `zeroed` ones
// pinned at zero. Returns the minimiser and the sum-constraint multiplier.
struct EqpResult {
  Eigen::VectorXd x;
  double multiplier = 0;
};

inline EqpResult solve_eqp(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, const std::vector<int>& free,
                           const std::set<int>& zeroed, const std::vector<bool>& in_sum, bool has_sum,
                           double sum_target) {
  std::vector<int> vars;
  for (int j : free)
    if (!zeroed.count(j)) vars.push_back(j);
  bool sum_active = false;
  if (has_sum)
    for (int j : vars) sum_active = sum_active || in_sum[static_cast<std::size_t>(j)];
  const auto m = static_cast<Eigen::Index>(vars.size());
  const Eigen::Index dim = m + (sum_active ? 1 : 0);
  EqpResult out;
  out.x = Eigen::VectorXd::Zero(gram.rows());
  if (has_sum && !sum_active) {
    if (std::abs(sum_target) > 1e-12) throw Error("empty feasible set");
  }
  if (dim == 0) return out;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = gram(vars[static_cast<std::size_t>(a)], vars[static_cast<std::size_t>(b)]);
    r(a) = rhs(vars[static_cast<std::size_t>(a)]);
    if (sum_active && in_sum[static_cast<std::size_t>(vars[static_cast<std::size_t>(a)])]) {
      kkt(a, m) = 1.0;
      kkt(m, a) = 1.0;
    }
  }
  if (sum_active) r(m) = sum_target;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw Error("coefficients not identified");
  const Eigen::VectorXd sol = lu.solve(r);
  for (Eigen::Index a = 0; a < m; ++a) out.x(vars[static_cast<std::size_t>(a)]) = sol(a);
  if (sum_active) out.multiplier = sol(m);
  return out;
}

}  // namespace detail

// Primal active-set method. The Gram matrix is formed from weighted rows; the
// problem sizes here are tiny (a handful of coefficients) so normal equations
// are adequate. KKT multipliers are accepted down to -tol.
inline LsqSolution constrained_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& w,
                                   const LsqConstraints& c, double tol = 1e-10) {
  const auto p = static_cast<int>(A.cols());
  for (const auto& [j, v] : c.fixed)
    if (j < 0 || j >= p) throw Error("constraint on unknown coefficient " + std::to_string(j));
  for (int j : c.nonnegative)
    if (j < 0 || j >= p) throw Error("constraint on unknown coefficient " + std::to_string(j));
  for (int j : c.sum_to_one)
    if (j < 0 || j >= p) throw Error("constraint on unknown coefficient " + std::to_string(j));

  Eigen::VectorXd fixed_part = Eigen::VectorXd::Zero(p);
  std::vector<int> free;
  for (int j = 0; j < p; ++j) {
    auto it = c.fixed.find(j);
    if (it != c.fixed.end()) {
      if (c.nonnegative.count(j) && it->second < 0) throw Error("empty feasible set");
      fixed_part(j) = it->second;
    } else {
      free.push_back(j);
    }
  }
  const Eigen::VectorXd resid_b = b - A * fixed_part;
  const Eigen::MatrixXd gram = A.transpose() * w.asDiagonal() * A;
  const Eigen::VectorXd rhs = A.transpose() * w.asDiagonal() * resid_b;

  const bool has_sum = !c.sum_to_one.empty();
  std::vector<bool> in_sum(static_cast<std::size_t>(p), false);
  double sum_target = 1.0;
  std::vector<int> free_in_sum;
  for (int j : c.sum_to_one) {
    in_sum[static_cast<std::size_t>(j)] = true;
    if (c.fixed.count(j))
      sum_target -= c.fixed.at(j);
    else
      free_in_sum.push_back(j);
  }

  // Feasible start: spread the sum evenly, everything else at zero.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  if (has_sum) {
    if (free_in_sum.empty()) {
      if (std::abs(sum_target) > 1e-12) throw Error("empty feasible set");
    } else {
      const double share = sum_target / static_cast<double>(free_in_sum.size());
      bool all_nonneg = true;
      for (int j : free_in_sum) all_nonneg = all_nonneg && c.nonnegative.count(j);
      if (share < 0 && all_nonneg) throw Error("empty feasible set");
      if (share < 0) {
        // put the whole (negative) target on an unrestricted member
        for (int j : free_in_sum)
          if (!c.nonnegative.count(j)) {
            x(j) = sum_target;
            break;
          }
      } else {
        for (int j : free_in_sum) x(j) = share;
      }
    }
  }
  std::set<int> working;
  for (int j : free)
    if (c.nonnegative.count(j) && x(j) == 0.0) working.insert(j);

  LsqSolution sol;
  for (int iter = 1; iter <= 200; ++iter) {
    sol.iterations = iter;
    auto eqp = detail::solve_eqp(gram, rhs, free, working, in_sum, has_sum, sum_target);
    const Eigen::VectorXd step = eqp.x - x;
    if (step.cwiseAbs().maxCoeff() <= tol * (1.0 + x.cwiseAbs().maxCoeff())) {
      x = eqp.x;
      // gradient of 0.5*objective: gram x - rhs; stationarity g + nu*1_S - lambda = 0
      const Eigen::VectorXd g = gram * x - rhs;
      int worst = -1;
      double worst_lambda = -tol;
      for (int j : working) {
        const double lambda = g(j) + (in_sum[static_cast<std::size_t>(j)] ? eqp.multiplier : 0.0);
        if (lambda < worst_lambda) {
          worst_lambda = lambda;
          worst = j;
        }
      }
      if (worst < 0) {
        sol.x = x + fixed_part;
        sol.active = working;
        const Eigen::VectorXd r = A * sol.x - b;
        sol.objective = r.dot(w.asDiagonal() * r);
        return sol;
      }
      working.erase(worst);
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int j : free) {
      if (!c.nonnegative.count(j) || working.count(j) || step(j) >= 0) continue;
      const double a = -x(j) / step(j);
      if (a < alpha) {
        alpha = a;
        blocking = j;
      }
    }
    x += alpha * step;
    if (blocking >= 0) {
      x(blocking) = 0.0;
      working.insert(blocking);
    }
  }
  throw Error("constrained least squares did not converge");
}

}  // namespace hazdid
