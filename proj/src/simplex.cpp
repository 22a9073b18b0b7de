#include "simplex_impl.hpp"

#include <cmath>
#include <limits>

#include "pdot/errors.hpp"

namespace pdot::detail {

namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kRatioTol = 1e-7;
constexpr double kFeasTol = 1e-9;
constexpr double kDegenStep = 1e-12;
constexpr int kRefactorEvery = 200;
constexpr std::int64_t kMaxPivots = 500000;

struct SparseCol {
  int row[3];
  double val[3];
  int nnz = 0;
};

// Rows use the compact numbering that skips the redundant constraint: with
// both marginals summing to one, the last column-marginal row is implied by
// the others, so it is dropped and its dual pinned to zero (this also fixes
// the additive gauge of the potentials).
SparseCol column_of(const TransportInstance& ti, int cid) {
  const int i = cid / ti.n2;
  const int j = cid % ti.n2;
  SparseCol c;
  c.row[0] = i;
  c.val[0] = 1.0;
  c.nnz = 1;
  if (j < ti.n2 - 1) {
    c.row[c.nnz] = ti.n1 + j;
    c.val[c.nnz] = 1.0;
    ++c.nnz;
  }
  if (ti.mot) {
    c.row[c.nnz] = ti.n1 + ti.n2 - 1 + i;
    c.val[c.nnz] = ti.s2[j] - ti.s1[i];
    ++c.nnz;
  }
  return c;
}

double dot_dual(const SparseCol& c, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (int k = 0; k < c.nnz; ++k) s += c.val[k] * y[c.row[k]];
  return s;
}

}  // namespace

RestrictedResult solve_restricted(const TransportInstance& ti,
                                  const std::vector<int>& cols) {
  const int m = ti.rows() - 1;  // redundant row dropped
  const int nreal = static_cast<int>(cols.size());

  Eigen::VectorXd b(m);
  b.head(ti.n1) = ti.w1;
  b.segment(ti.n1, ti.n2 - 1) = ti.w2.head(ti.n2 - 1);
  if (ti.mot) b.tail(ti.n1).setZero();

  std::vector<SparseCol> a(nreal);
  Eigen::VectorXd c_real(nreal);
  for (int k = 0; k < nreal; ++k) {
    a[k] = column_of(ti, cols[k]);
    c_real[k] = (*ti.cost)(cols[k] / ti.n2, cols[k] % ti.n2);
  }

  // basis[r] holds a column index into cols, or nreal + r for the artificial
  // of row r. Artificials start basic; B = I.
  std::vector<int> basis(m);
  for (int r = 0; r < m; ++r) basis[r] = nreal + r;
  std::vector<char> in_basis(nreal, 0);
  Eigen::MatrixXd b_inv = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd x_b = b;

  RestrictedResult res;
  bool phase1 = true;
  bool bland = false;
  std::int64_t degen = 0;
  int since_refactor = 0;

  auto basic_cost = [&](int id) {
    if (id >= nreal) return phase1 ? 1.0 : 0.0;
    return phase1 ? 0.0 : c_real[id];
  };

  auto refactorize = [&]() {
    Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r < m; ++r) {
      const int id = basis[r];
      if (id >= nreal) {
        bmat(id - nreal, r) = 1.0;
      } else {
        const SparseCol& col = a[id];
        for (int k = 0; k < col.nnz; ++k) bmat(col.row[k], r) = col.val[k];
      }
    }
    b_inv = bmat.partialPivLu().inverse();
    x_b = b_inv * b;
    for (int r = 0; r < m; ++r) {
      if (x_b[r] < 0.0 && x_b[r] > -1e-7) x_b[r] = 0.0;
    }
    since_refactor = 0;
  };

  // Expands compact duals back to the caller's full row numbering, zero at
  // the dropped row.
  auto expand_duals = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(ti.rows());
    full.head(ti.n1 + ti.n2 - 1) = y.head(ti.n1 + ti.n2 - 1);
    if (ti.mot) full.tail(ti.n1) = y.tail(ti.n1);
    return full;
  };

  while (true) {
    Eigen::VectorXd c_b(m);
    for (int r = 0; r < m; ++r) c_b[r] = basic_cost(basis[r]);
    const Eigen::VectorXd y = b_inv.transpose() * c_b;

    // Pricing over the nonbasic real columns (artificials never re-enter).
    int enter = -1;
    double best = -kPivotTol;
    for (int k = 0; k < nreal; ++k) {
      if (in_basis[k]) continue;
      const double red = basic_cost(k) - dot_dual(a[k], y);
      if (red < -kPivotTol) {
        if (bland) {
          enter = k;
          break;
        }
        if (red < best) {
          best = red;
          enter = k;
        }
      }
    }

    if (enter < 0) {
      const double obj = c_b.dot(x_b);
      if (phase1) {
        if (obj > kFeasTol) {
          res.feasible = false;
          res.y = expand_duals(y);  // Farkas prices for column generation
          return res;
        }
        phase1 = false;
        continue;
      }
      for (int r = 0; r < m; ++r) {
        if (basis[r] >= nreal && x_b[r] > kFeasTol) {
          throw NumericalError(
              "solve_restricted: artificial regained mass in phase 2");
        }
      }
      res.feasible = true;
      res.obj = obj;
      res.y = expand_duals(y);
      for (int r = 0; r < m; ++r) {
        if (basis[r] < nreal && x_b[r] > 1e-12) {
          res.cells.push_back(
              {cols[basis[r]] / ti.n2, cols[basis[r]] % ti.n2, x_b[r]});
        }
      }
      return res;
    }

    // Direction through the basis inverse; sparse right-hand side.
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < a[enter].nnz; ++k) {
      d += a[enter].val[k] * b_inv.col(a[enter].row[k]);
    }

    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    // A degenerate basic artificial must not regain mass in phase 2: a
    // direction that would raise it blocks at a zero-length step.
    if (!phase1) {
      for (int r = 0; r < m; ++r) {
        if (basis[r] >= nreal && d[r] < -kRatioTol) {
          leave = r;
          theta = 0.0;
          break;
        }
      }
    }
    if (leave < 0) {
      // Ratios clamp drifted-negative basics to 0 so they leave degenerately
      // instead of driving a negative step.
      auto ratio = [&](int r) { return std::max(x_b[r], 0.0) / d[r]; };
      for (int r = 0; r < m; ++r) {
        if (d[r] > kRatioTol) theta = std::min(theta, ratio(r));
      }
      if (!std::isfinite(theta)) {
        throw UnboundedError("solve_restricted: unbounded direction in simplex");
      }
      // Among min-ratio ties: Bland takes the smallest basis index (its
      // anti-cycling guarantee); otherwise prefer evicting an artificial,
      // then the largest pivot element for stability.
      const double tie = theta + 1e-12 * (1.0 + theta);
      for (int r = 0; r < m; ++r) {
        if (d[r] <= kRatioTol || ratio(r) > tie) continue;
        if (leave < 0) {
          leave = r;
        } else if (bland) {
          if (basis[r] < basis[leave]) leave = r;
        } else {
          const bool art_r = basis[r] >= nreal;
          const bool art_l = basis[leave] >= nreal;
          if (art_r != art_l ? art_r : d[r] > d[leave]) leave = r;
        }
      }
      if (leave < 0) {
        throw NumericalError("solve_restricted: ratio test found no pivot row");
      }
    }
    if (theta < kDegenStep) {
      if (++degen > 10LL * m) bland = true;
    } else {
      degen = 0;
    }

    x_b -= theta * d;
    x_b[leave] = theta;
    for (int r = 0; r < m; ++r) {
      if (r != leave && x_b[r] < 0.0 && x_b[r] > -1e-9) x_b[r] = 0.0;
    }
    b_inv.row(leave) /= d[leave];
    for (int r = 0; r < m; ++r) {
      if (r != leave && std::fabs(d[r]) > 0.0) {
        b_inv.row(r) -= d[r] * b_inv.row(leave);
      }
    }
    if (basis[leave] < nreal) in_basis[basis[leave]] = 0;
    basis[leave] = enter;
    in_basis[enter] = 1;

    ++res.pivots;
    if (res.pivots > kMaxPivots) {
      throw NumericalError("solve_restricted: pivot limit exceeded");
    }
    if (++since_refactor >= kRefactorEvery) refactorize();
  }
}

}  // namespace pdot::detail
