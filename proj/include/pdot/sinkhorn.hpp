#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/cost.hpp"
#include "pdot/measure.hpp"

namespace pdot {

// Entropically regularized transport between two weighted atom sets with the
// product prior p0_ij = w1_i * w2_j. Atoms are rows; d = 1 for the mot path.
struct DiscreteProblem {
  Eigen::MatrixXd atoms1;  // n1 x d
  Eigen::VectorXd w1;
  Eigen::MatrixXd atoms2;  // n2 x d
  Eigen::VectorXd w2;
  Eigen::MatrixXd cost;  // n1 x n2
  double eps = 1e-2;
  double mean_shift = 0.0;  // affine shift applied to atoms2 (mot feasibility)

  int n1() const { return static_cast<int>(atoms1.rows()); }
  int n2() const { return static_cast<int>(atoms2.rows()); }
};

// Equal-weight atoms at F^-1((i-1/2)/n) of a 1-d measure.
void quantile_atoms(const Measure& m, int n, Eigen::VectorXd& atoms,
                    Eigen::VectorXd& weights);

// Builds the discretized problem on quantile atoms. With mean_match, atoms2
// is shifted by the (small) weighted-mean difference so martingale couplings
// stay feasible after discretization; the shift is recorded.
DiscreteProblem make_discrete_problem(const Measure& mu1, const Measure& mu2,
                                      const CostFn& cost, int n, double eps,
                                      bool mean_match);

// Dual potentials and progress of a Sinkhorn run.
struct SinkhornState {
  Eigen::VectorXd u1, u2;
  Eigen::VectorXd h;  // mot multiplier, one scalar per atom1 (d = 1)
  std::int64_t iterations = 0;
  double residual1 = 0.0;    // L1 gap, first marginal
  double residual2 = 0.0;    // L1 gap, second marginal
  double residual_mart = 0.0;
};

struct SinkhornResult {
  double value = 0.0;
  bool converged = false;
  SinkhornState state;
  std::vector<double> dual_trace;  // dual objective per iteration
};

SinkhornState make_sinkhorn_state(const DiscreteProblem& prob, bool mot);

// Exact coordinate updates of the dual in log-domain. update_h solves the
// per-atom martingale root by safeguarded Newton (normalized residual 1e-12)
// and requires d = 1.
void sinkhorn_update_u1(const DiscreteProblem& prob, SinkhornState& s);
void sinkhorn_update_u2(const DiscreteProblem& prob, SinkhornState& s);
void sinkhorn_update_h(const DiscreteProblem& prob, SinkhornState& s);

// Coupling pi_ij = w1_i w2_j exp((C - u1 - u2 - h.(s2-s1))/eps) at the
// current potentials.
Eigen::MatrixXd sinkhorn_coupling(const DiscreteProblem& prob,
                                  const SinkhornState& s);

// Concave dual objective (the quantity each exact update cannot decrease):
// -(sum w1 u1 + sum w2 u2 + eps * sum_ij p0_ij e^((C-u1-u2-h dS)/eps)).
double sinkhorn_dual_objective(const DiscreteProblem& prob,
                               const SinkhornState& s);

// Marginal and martingale L1 residuals of the current coupling.
void sinkhorn_residuals(const DiscreteProblem& prob, SinkhornState& s);

// Alternating u1 / u2 updates until both marginal residuals <= tol. A run
// hitting max_iter returns converged = false with the residuals filled in.
SinkhornResult sinkhorn_ot(const DiscreteProblem& prob, std::int64_t max_iter,
                           double tol);

// u1 / h / u2 sweeps with the per-atom martingale root solve; stops when
// marginal plus martingale residuals <= tol.
SinkhornResult sinkhorn_mot(const DiscreteProblem& prob, std::int64_t max_iter,
                            double tol);

}  // namespace pdot
