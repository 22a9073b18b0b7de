#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/cost.hpp"
#include "pdot/errors.hpp"
#include "pdot/measure.hpp"

namespace pdot {

// Comonotone coupling value: integral over (0,1) of c(F1^-1(u), F2^-1(u)) by
// midpoint quadrature. This is the exact d = 1 transport value for costs with
// nonnegative mixed second derivative (checked by twist probes).
double frechet_hoeffding_value(const CostFn& c, const Measure& mu1,
                               const Measure& mu2, int n_quad = 10000);

// Closed-form squared 2-Wasserstein distance between isotropic centered
// normals: d * (sqrt(var2) - sqrt(var1))^2.
double gaussian_w2_value(int d, double var1, double var2);

enum class LpMethod { dense_simplex, cutting_plane };
enum class LpSense { maximize, minimize };

// Discretized (martingale) transport LP over a coupling grid: row sums match
// the mu1 weights, column sums the mu2 weights, and in mot mode each row also
// carries the martingale constraint sum_j p_ij (s2_j - s1_i) = 0.
struct LpInstance {
  Eigen::VectorXd atoms1, w1;
  Eigen::VectorXd atoms2, w2;
  Eigen::MatrixXd cost;  // n1 x n2
  bool mot = false;
  LpSense sense = LpSense::maximize;
  double mean_shift = 0.0;  // applied to atoms2 when mean-matched
};

// Quantile-atom instance of the transport LP for 1-d marginals. In mot mode
// atoms2 is mean-matched to atoms1 (shift recorded) so the discretized
// problem keeps a feasible martingale coupling.
LpInstance make_lp_instance(const Measure& mu1, const Measure& mu2,
                            const CostFn& cost, int n, bool mot,
                            LpSense sense = LpSense::maximize);

struct LpCell {
  int i = 0, j = 0;
  double p = 0.0;
};

struct LpSolution {
  double value = 0.0;
  std::vector<LpCell> coupling;  // cells with mass > 1e-12
  Eigen::VectorXd u1, u2;        // dual potentials per atom
  Eigen::VectorXd h;             // mot row multipliers (empty otherwise)
  double dual_value = 0.0;
  std::int64_t pivots = 0;
  int rounds = 1;                       // cutting-plane outer rounds
  std::vector<double> round_values;     // restricted optimum per round
  double max_violation = 0.0;           // final dual infeasibility on the grid
  double mean_shift = 0.0;
};

// Solves the instance exactly. dense_simplex runs a revised simplex over all
// n1*n2 columns (requires n1*n2 <= 4e6); cutting_plane grows the support from
// a small seed set, adding columns whose dual constraint is violated by more
// than 1e-9 until none remain. Throws InfeasibleError (with certificate
// message) when no coupling satisfies the constraints, e.g. mot marginals
// out of convex order.
LpSolution solve_lp(const LpInstance& inst, LpMethod method);

}  // namespace pdot
