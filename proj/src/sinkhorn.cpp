#include "pdot/sinkhorn.hpp"

#include <cmath>

#include "pdot/errors.hpp"

namespace pdot {

namespace {

// Log-sum-exp of x + log(w), stable under large exponents.
double lse_weighted(const Eigen::ArrayXd& x, const Eigen::VectorXd& w) {
  const double m = x.maxCoeff();
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    s += w[j] * std::exp(x[j] - m);
  }
  return m + std::log(s);
}

// (C_ij - u1_i - u2_j - h_i (s2_j - s1_i)) / eps for all ij.
Eigen::MatrixXd exponent_matrix(const DiscreteProblem& prob,
                                const SinkhornState& s) {
  Eigen::MatrixXd e = prob.cost;
  e.colwise() -= s.u1;
  e.rowwise() -= s.u2.transpose();
  if (s.h.size() > 0) {
    for (int i = 0; i < prob.n1(); ++i) {
      for (int j = 0; j < prob.n2(); ++j) {
        e(i, j) -= s.h[i] * (prob.atoms2(j, 0) - prob.atoms1(i, 0));
      }
    }
  }
  return e / prob.eps;
}

// Row statistics at multiplier theta: weighted mean and variance of
// dS_j = s2_j - s1_i under the (unnormalized) row measure
// w2_j exp((B_j - theta dS_j)/eps), plus the normalized residual.
struct RowStats {
  double mean = 0.0, var = 0.0, norm_resid = 0.0;
};

RowStats row_stats(const Eigen::ArrayXd& b_over_eps, const Eigen::ArrayXd& ds,
                   const Eigen::VectorXd& w2, double theta, double eps) {
  const Eigen::ArrayXd e = b_over_eps - (theta / eps) * ds;
  const double m = e.maxCoeff();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, sa = 0.0;
  for (Eigen::Index j = 0; j < ds.size(); ++j) {
    const double t = w2[j] * std::exp(e[j] - m);
    s0 += t;
    s1 += t * ds[j];
    s2 += t * ds[j] * ds[j];
    sa += t * std::fabs(ds[j]);
  }
  RowStats st;
  st.mean = s1 / s0;
  st.var = s2 / s0 - st.mean * st.mean;
  st.norm_resid = sa > 0.0 ? std::fabs(s1) / sa : 0.0;
  return st;
}

// Root of the row martingale condition E[dS] = 0 in theta, by bracketed
// Newton. The mean is strictly decreasing in theta, so a sign-changing
// bracket pins the root; Newton steps leaving it fall back to bisection.
double solve_row_multiplier(const Eigen::ArrayXd& b_over_eps,
                            const Eigen::ArrayXd& ds, const Eigen::VectorXd& w2,
                            double eps, double theta0, double span) {
  const double tol = 1e-12;
  RowStats st = row_stats(b_over_eps, ds, w2, theta0, eps);
  if (st.norm_resid <= tol) return theta0;

  double w = 50.0 * eps / span;
  double lo = theta0, hi = theta0;
  if (st.mean > 0.0) {
    hi = theta0 + w;
    int tries = 0;
    while (row_stats(b_over_eps, ds, w2, hi, eps).mean > 0.0) {
      lo = hi;
      w *= 2.0;
      hi = theta0 + w;
      if (++tries > 60) {
        throw NumericalError(
            "sinkhorn_update_h: martingale root not bracketed; an atom of the "
            "first marginal lies outside the support of the second");
      }
    }
  } else {
    lo = theta0 - w;
    int tries = 0;
    while (row_stats(b_over_eps, ds, w2, lo, eps).mean < 0.0) {
      hi = lo;
      w *= 2.0;
      lo = theta0 - w;
      if (++tries > 60) {
        throw NumericalError(
            "sinkhorn_update_h: martingale root not bracketed; an atom of the "
            "first marginal lies outside the support of the second");
      }
    }
  }

  double theta = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    st = row_stats(b_over_eps, ds, w2, theta, eps);
    if (st.norm_resid <= tol) return theta;
    if (st.mean > 0.0) {
      lo = theta;
    } else {
      hi = theta;
    }
    double next = theta + eps * st.mean / std::max(st.var, 1e-300);
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = 0.5 * (lo + hi);
    }
    if (next == theta) return theta;
    theta = next;
  }
  return theta;
}

}  // namespace

void quantile_atoms(const Measure& m, int n, Eigen::VectorXd& atoms,
                    Eigen::VectorXd& weights) {
  if (m.dim() != 1) {
    throw UnsupportedError("quantile_atoms: measure must be 1-d");
  }
  if (n < 1) throw ParameterError("quantile_atoms: n must be positive");
  atoms.resize(n);
  for (int i = 0; i < n; ++i) {
    atoms[i] = m.quantile((i + 0.5) / n);
  }
  weights = Eigen::VectorXd::Constant(n, 1.0 / n);
}

DiscreteProblem make_discrete_problem(const Measure& mu1, const Measure& mu2,
                                      const CostFn& cost, int n, double eps,
                                      bool mean_match) {
  if (eps <= 0.0) {
    throw ParameterError("make_discrete_problem: eps must be positive");
  }
  DiscreteProblem prob;
  Eigen::VectorXd a1, w1, a2, w2;
  quantile_atoms(mu1, n, a1, w1);
  quantile_atoms(mu2, n, a2, w2);
  prob.atoms1 = a1;
  prob.w1 = w1;
  prob.atoms2 = a2;
  prob.w2 = w2;
  prob.eps = eps;
  if (mean_match) {
    prob.mean_shift = w1.dot(a1) - w2.dot(a2);
    prob.atoms2.array() += prob.mean_shift;
  }
  prob.cost.resize(prob.n1(), prob.n2());
  for (int i = 0; i < prob.n1(); ++i) {
    for (int j = 0; j < prob.n2(); ++j) {
      prob.cost(i, j) =
          cost.eval(prob.atoms1.row(i).transpose(), prob.atoms2.row(j).transpose());
    }
  }
  return prob;
}

SinkhornState make_sinkhorn_state(const DiscreteProblem& prob, bool mot) {
  SinkhornState s;
  s.u1 = Eigen::VectorXd::Zero(prob.n1());
  s.u2 = Eigen::VectorXd::Zero(prob.n2());
  if (mot) s.h = Eigen::VectorXd::Zero(prob.n1());
  return s;
}

void sinkhorn_update_u1(const DiscreteProblem& prob, SinkhornState& s) {
  const bool mot = s.h.size() > 0;
  for (int i = 0; i < prob.n1(); ++i) {
    Eigen::ArrayXd x(prob.n2());
    for (int j = 0; j < prob.n2(); ++j) {
      double v = prob.cost(i, j) - s.u2[j];
      if (mot) v -= s.h[i] * (prob.atoms2(j, 0) - prob.atoms1(i, 0));
      x[j] = v / prob.eps;
    }
    s.u1[i] = prob.eps * lse_weighted(x, prob.w2);
  }
}

void sinkhorn_update_u2(const DiscreteProblem& prob, SinkhornState& s) {
  const bool mot = s.h.size() > 0;
  for (int j = 0; j < prob.n2(); ++j) {
    Eigen::ArrayXd x(prob.n1());
    for (int i = 0; i < prob.n1(); ++i) {
      double v = prob.cost(i, j) - s.u1[i];
      if (mot) v -= s.h[i] * (prob.atoms2(j, 0) - prob.atoms1(i, 0));
      x[i] = v / prob.eps;
    }
    s.u2[j] = prob.eps * lse_weighted(x, prob.w1);
  }
}

void sinkhorn_update_h(const DiscreteProblem& prob, SinkhornState& s) {
  if (s.h.size() == 0) {
    throw UnsupportedError("sinkhorn_update_h: state has no martingale block");
  }
  double span = 0.0;
  for (int i = 0; i < prob.n1(); ++i) {
    for (int j = 0; j < prob.n2(); ++j) {
      span = std::max(span,
                      std::fabs(prob.atoms2(j, 0) - prob.atoms1(i, 0)));
    }
  }
  if (span == 0.0) return;
  for (int i = 0; i < prob.n1(); ++i) {
    Eigen::ArrayXd b(prob.n2()), ds(prob.n2());
    for (int j = 0; j < prob.n2(); ++j) {
      b[j] = (prob.cost(i, j) - s.u2[j]) / prob.eps;
      ds[j] = prob.atoms2(j, 0) - prob.atoms1(i, 0);
    }
    s.h[i] = solve_row_multiplier(b, ds, prob.w2, prob.eps, s.h[i], span);
  }
}

Eigen::MatrixXd sinkhorn_coupling(const DiscreteProblem& prob,
                                  const SinkhornState& s) {
  const Eigen::MatrixXd e = exponent_matrix(prob, s);
  Eigen::MatrixXd pi(prob.n1(), prob.n2());
  for (int i = 0; i < prob.n1(); ++i) {
    for (int j = 0; j < prob.n2(); ++j) {
      pi(i, j) = prob.w1[i] * prob.w2[j] * std::exp(e(i, j));
    }
  }
  return pi;
}

double sinkhorn_dual_objective(const DiscreteProblem& prob,
                               const SinkhornState& s) {
  const Eigen::MatrixXd e = exponent_matrix(prob, s);
  double mass = 0.0;
  for (int i = 0; i < prob.n1(); ++i) {
    for (int j = 0; j < prob.n2(); ++j) {
      mass += prob.w1[i] * prob.w2[j] * std::exp(e(i, j));
    }
  }
  return -(prob.w1.dot(s.u1) + prob.w2.dot(s.u2) + prob.eps * mass);
}

void sinkhorn_residuals(const DiscreteProblem& prob, SinkhornState& s) {
  const Eigen::MatrixXd pi = sinkhorn_coupling(prob, s);
  s.residual1 = (pi.rowwise().sum() - prob.w1).array().abs().sum();
  s.residual2 = (pi.colwise().sum().transpose() - prob.w2).array().abs().sum();
  if (s.h.size() > 0) {
    double r = 0.0;
    for (int i = 0; i < prob.n1(); ++i) {
      double drift = 0.0;
      for (int j = 0; j < prob.n2(); ++j) {
        drift += pi(i, j) * (prob.atoms2(j, 0) - prob.atoms1(i, 0));
      }
      r += std::fabs(drift);
    }
    s.residual_mart = r;
  } else {
    s.residual_mart = 0.0;
  }
}

namespace {

SinkhornResult run_sinkhorn(const DiscreteProblem& prob, std::int64_t max_iter,
                            double tol, bool mot) {
  SinkhornResult res;
  res.state = make_sinkhorn_state(prob, mot);
  SinkhornState& s = res.state;
  for (std::int64_t it = 0; it < max_iter; ++it) {
    sinkhorn_update_u1(prob, s);
    if (mot) {
      sinkhorn_update_h(prob, s);
      sinkhorn_update_u1(prob, s);
    }
    sinkhorn_update_u2(prob, s);
    s.iterations = it + 1;
    res.dual_trace.push_back(sinkhorn_dual_objective(prob, s));
    sinkhorn_residuals(prob, s);
    double gap = s.residual1 + s.residual2;
    if (mot) gap += s.residual_mart;
    if (gap <= tol) {
      res.converged = true;
      break;
    }
  }
  const Eigen::MatrixXd pi = sinkhorn_coupling(prob, s);
  res.value = (pi.array() * prob.cost.array()).sum();
  return res;
}

}  // namespace

SinkhornResult sinkhorn_ot(const DiscreteProblem& prob, std::int64_t max_iter,
                           double tol) {
  return run_sinkhorn(prob, max_iter, tol, false);
}

SinkhornResult sinkhorn_mot(const DiscreteProblem& prob, std::int64_t max_iter,
                            double tol) {
  return run_sinkhorn(prob, max_iter, tol, true);
}

}  // namespace pdot
