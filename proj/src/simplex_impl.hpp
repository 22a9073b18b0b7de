#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/lp.hpp"

namespace pdot::detail {

// Transport LP in internal min form over a restricted column set. Columns are
// coupling cells encoded as i * n2 + j; rows are the n1 row-marginal, n2
// column-marginal and (mot only) n1 martingale constraints.
struct TransportInstance {
  int n1 = 0, n2 = 0;
  bool mot = false;
  Eigen::VectorXd w1, w2;  // marginal weights (rhs)
  Eigen::VectorXd s1, s2;  // atom positions (martingale coefficients)
  const Eigen::MatrixXd* cost = nullptr;  // min-form objective, n1 x n2

  int rows() const { return n1 + n2 + (mot ? n1 : 0); }
};

struct RestrictedResult {
  bool feasible = false;
  double obj = 0.0;           // min-form optimum (feasible only)
  Eigen::VectorXd y;          // min-form duals; phase-1 duals when infeasible
  std::vector<LpCell> cells;  // basic cells with mass > 1e-12
  std::int64_t pivots = 0;
};

// Two-phase revised simplex with a dense maintained basis inverse, periodic
// refactorization, and Bland's rule after sustained degeneracy.
RestrictedResult solve_restricted(const TransportInstance& ti,
                                  const std::vector<int>& cols);

}  // namespace pdot::detail
