#include "pdot/lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdot/rng.hpp"
#include "pdot/sinkhorn.hpp"
#include "simplex_impl.hpp"

namespace pdot {

double frechet_hoeffding_value(const CostFn& c, const Measure& mu1,
                               const Measure& mu2, int n_quad) {
  if (mu1.dim() != 1 || mu2.dim() != 1) {
    throw UnsupportedError("frechet_hoeffding_value: marginals must be 1-d");
  }
  if (n_quad < 1) {
    throw ParameterError("frechet_hoeffding_value: n_quad must be positive");
  }
  double acc = 0.0;
  Eigen::VectorXd x1(1), x2(1);
  for (int k = 0; k < n_quad; ++k) {
    const double u = (k + 0.5) / n_quad;
    x1[0] = mu1.quantile(u);
    x2[0] = mu2.quantile(u);
    acc += c.eval(x1, x2);
  }
  return acc / n_quad;
}

double gaussian_w2_value(int d, double var1, double var2) {
  if (d < 1) throw ParameterError("gaussian_w2_value: d must be positive");
  if (var1 <= 0.0 || var2 <= 0.0) {
    throw ParameterError("gaussian_w2_value: variances must be positive");
  }
  const double gap = std::sqrt(var2) - std::sqrt(var1);
  return d * gap * gap;
}

LpInstance make_lp_instance(const Measure& mu1, const Measure& mu2,
                            const CostFn& cost, int n, bool mot, LpSense sense) {
  LpInstance inst;
  quantile_atoms(mu1, n, inst.atoms1, inst.w1);
  quantile_atoms(mu2, n, inst.atoms2, inst.w2);
  inst.mot = mot;
  inst.sense = sense;
  if (mot) {
    inst.mean_shift = inst.w1.dot(inst.atoms1) - inst.w2.dot(inst.atoms2);
    inst.atoms2.array() += inst.mean_shift;
  }
  const int n1 = static_cast<int>(inst.atoms1.size());
  const int n2 = static_cast<int>(inst.atoms2.size());
  inst.cost.resize(n1, n2);
  Eigen::VectorXd x1(1), x2(1);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      x1[0] = inst.atoms1[i];
      x2[0] = inst.atoms2[j];
      inst.cost(i, j) = cost.eval(x1, x2);
    }
  }
  return inst;
}

namespace {

// Converts the restricted min-form result into the user-sense solution.
void fill_solution(const LpInstance& inst, const detail::RestrictedResult& rr,
                   LpSolution& sol) {
  const int n1 = static_cast<int>(inst.atoms1.size());
  const int n2 = static_cast<int>(inst.atoms2.size());
  const double sgn = inst.sense == LpSense::maximize ? -1.0 : 1.0;
  sol.value = sgn * rr.obj;
  sol.coupling = rr.cells;
  sol.u1 = sgn * rr.y.head(n1);
  sol.u2 = sgn * rr.y.segment(n1, n2);
  if (inst.mot) {
    sol.h = sgn * rr.y.tail(n1);
  } else {
    sol.h.resize(0);
  }
  sol.dual_value = inst.w1.dot(sol.u1) + inst.w2.dot(sol.u2);
}

// Largest dual-feasibility violation over the full grid, in the user sense.
double grid_violation(const LpInstance& inst, const LpSolution& sol) {
  const int n1 = static_cast<int>(inst.atoms1.size());
  const int n2 = static_cast<int>(inst.atoms2.size());
  const double sgn = inst.sense == LpSense::maximize ? 1.0 : -1.0;
  double worst = 0.0;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      double support = sol.u1[i] + sol.u2[j];
      if (inst.mot) support += sol.h[i] * (inst.atoms2[j] - inst.atoms1[i]);
      worst = std::max(worst, sgn * (inst.cost(i, j) - support));
    }
  }
  return worst;
}

LpSolution solve_dense(const LpInstance& inst, const Eigen::MatrixXd& c_int,
                       const detail::TransportInstance& ti) {
  const int n1 = ti.n1, n2 = ti.n2;
  std::vector<int> cols(static_cast<std::size_t>(n1) * n2);
  std::iota(cols.begin(), cols.end(), 0);
  const auto rr = detail::solve_restricted(ti, cols);
  if (!rr.feasible) {
    throw InfeasibleError(
        "solve_lp: no coupling satisfies the marginal"
        + std::string(inst.mot ? " and martingale" : "") +
        " constraints (phase-1 mass stayed positive); for mot this is the "
        "convex-order obstruction");
  }
  LpSolution sol;
  fill_solution(inst, rr, sol);
  sol.pivots = rr.pivots;
  sol.rounds = 1;
  sol.round_values = {sol.value};
  sol.max_violation = grid_violation(inst, sol);
  sol.mean_shift = inst.mean_shift;
  (void)c_int;
  return sol;
}

LpSolution solve_cutting_plane(const LpInstance& inst,
                               const Eigen::MatrixXd& c_int,
                               const detail::TransportInstance& ti) {
  const int n1 = ti.n1, n2 = ti.n2;
  const double viol_tol = 1e-9;

  std::vector<char> active(static_cast<std::size_t>(n1) * n2, 0);
  auto add = [&](int i, int j) { active[static_cast<std::size_t>(i) * n2 + j] = 1; };
  for (int i = 0; i < n1; ++i) {
    add(i, static_cast<int>((static_cast<std::int64_t>(i) * (n2 - 1)) /
                            std::max(1, n1 - 1)));
    if (ti.mot) {
      add(i, 0);
      add(i, n2 - 1);
    }
  }
  Rng rng(20240801);
  const std::int64_t n_random = (static_cast<std::int64_t>(n1) * n2) / 20;
  for (std::int64_t k = 0; k < n_random; ++k) {
    add(static_cast<int>(rng.index(n1)), static_cast<int>(rng.index(n2)));
  }

  LpSolution sol;
  sol.mean_shift = inst.mean_shift;
  detail::RestrictedResult rr;
  for (int round = 1;; ++round) {
    if (round > 200) {
      throw NumericalError("solve_lp: cutting-plane round limit exceeded");
    }
    std::vector<int> cols;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (active[k]) cols.push_back(static_cast<int>(k));
    }
    rr = detail::solve_restricted(ti, cols);
    sol.pivots += rr.pivots;
    sol.rounds = round;

    // Price the whole grid against the duals: Farkas prices when
    // infeasible (phase-1 objective row), regular reduced costs otherwise.
    std::int64_t added = 0;
    double worst = 0.0;
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n2; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n2 + j;
        if (active[k]) continue;
        double support = rr.y[i] + rr.y[n1 + j];
        if (ti.mot) support += rr.y[n1 + n2 + i] * (ti.s2[j] - ti.s1[i]);
        const double red = (rr.feasible ? c_int(i, j) : 0.0) - support;
        if (red < -viol_tol) {
          active[k] = 1;
          ++added;
          worst = std::max(worst, -red);
        }
      }
    }
    if (rr.feasible) {
      LpSolution round_sol;
      fill_solution(inst, rr, round_sol);
      sol.round_values.push_back(round_sol.value);
      if (added == 0) {
        round_sol.pivots = sol.pivots;
        round_sol.rounds = sol.rounds;
        round_sol.round_values = sol.round_values;
        round_sol.mean_shift = sol.mean_shift;
        round_sol.max_violation = grid_violation(inst, round_sol);
        return round_sol;
      }
    } else if (added == 0) {
      throw InfeasibleError(
          "solve_lp: restricted problem infeasible and no priced column "
          "improves it; the full problem admits no coupling (for mot this is "
          "the convex-order obstruction)");
    }
  }
}

}  // namespace

LpSolution solve_lp(const LpInstance& inst, LpMethod method) {
  const int n1 = static_cast<int>(inst.atoms1.size());
  const int n2 = static_cast<int>(inst.atoms2.size());
  if (n1 < 1 || n2 < 1) throw ParameterError("solve_lp: empty instance");
  if (inst.cost.rows() != n1 || inst.cost.cols() != n2) {
    throw ShapeError("solve_lp: cost table does not match the atom counts");
  }
  if (static_cast<std::int64_t>(n1) * n2 > 4000000) {
    throw ParameterError("solve_lp: grid exceeds 4e6 cells");
  }

  const Eigen::MatrixXd c_int =
      inst.sense == LpSense::maximize ? (-inst.cost).eval() : inst.cost;
  detail::TransportInstance ti;
  ti.n1 = n1;
  ti.n2 = n2;
  ti.mot = inst.mot;
  ti.w1 = inst.w1;
  ti.w2 = inst.w2;
  ti.s1 = inst.atoms1;
  ti.s2 = inst.atoms2;
  ti.cost = &c_int;

  return method == LpMethod::dense_simplex ? solve_dense(inst, c_int, ti)
                                           : solve_cutting_plane(inst, c_int, ti);
}

}  // namespace pdot
