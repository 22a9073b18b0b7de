#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace pdot {

// One monomial coef * s1^p1 * s2^p2 of a scalar polynomial cost (dim 1).
struct PolyTerm {
  double coef = 0.0;
  int p1 = 0;
  int p2 = 0;
};

// Transport cost c(s1, s2). Builtins carry analytic gradients in s2; custom
// polynomial costs use central finite differences. A cost may carry a convex
// shift function U with c_bar = c - U concave in s2, the form required by the
// saddle-point solver; the discarded part is restored through E^{mu2}[U].
class CostFn {
 public:
  CostFn() = default;  // the "sum_squared" builtin

  double eval(const Eigen::VectorXd& s1, const Eigen::VectorXd& s2) const;
  Eigen::VectorXd grad_s2(const Eigen::VectorXd& s1, const Eigen::VectorXd& s2) const;

  // Row-wise evaluation over paired samples (rows of x1 and x2).
  Eigen::VectorXd eval_batch(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) const;
  Eigen::MatrixXd grad_s2_batch(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) const;

  const std::string& name() const { return name_; }

  // Required sample dimension, 0 meaning any.
  int dim() const { return dim_; }

  // True when the cost is concave in s2 as-is (no shift needed).
  bool concave_in_s2() const { return concave_; }

  // True when a shift function U is defined for this cost.
  bool has_shift() const { return has_shift_; }

  // True when U depends on the sampled domain (its coefficient is fixed only
  // once shifted_cost is given the largest s1 sample).
  bool shift_needs_domain() const { return shift_needs_domain_; }

  // True for costs produced by shifted_cost.
  bool is_shifted() const { return shifted_; }

  // U(y) of the shift attached to this cost (zero when none).
  double shift_value(const Eigen::VectorXd& y) const;

  friend CostFn builtin_cost(const std::string& name);
  friend CostFn polynomial_cost(std::vector<PolyTerm> terms, std::string name);
  friend CostFn shifted_cost(const CostFn& c, double s1_max);

 private:
  enum class Kind { sum_squared, neg_diff_squared, neg_l2sq, cubic_sum, polynomial };

  double eval_one(const double* s1, const double* s2, int d) const;
  void grad_one(const double* s1, const double* s2, int d, double* out) const;

  Kind kind_ = Kind::sum_squared;
  std::string name_;
  int dim_ = 1;
  bool concave_ = false;
  bool has_shift_ = false;
  bool shift_needs_domain_ = false;
  bool shifted_ = false;
  double shift_y3_ = 0.0;  // U(y) = shift_y3 * sum y^3 + shift_y2 * sum y^2
  double shift_y2_ = 0.0;
  std::vector<PolyTerm> terms_;
};

// Builtin costs: "sum_squared" (s1+s2)^2, "neg_diff_squared" -(s1-s2)^2,
// "cubic_sum" (s1+s2)^3 (all dim 1), and "neg_l2sq_d" -|s1-s2|^2 (any dim).
CostFn builtin_cost(const std::string& name);

// Custom scalar polynomial cost from monomial terms.
CostFn polynomial_cost(std::vector<PolyTerm> terms, std::string name = "poly");

// Returns the shifted cost c - U. For shifts whose coefficient depends on the
// sampled domain (cubic_sum), the largest observed s1 must be supplied.
CostFn shifted_cost(const CostFn& c,
                    double s1_max = std::numeric_limits<double>::quiet_NaN());

// Mean of U over rows of `points`: the additive correction restoring the
// original transport value.
double shift_mean(const CostFn& shifted, const Eigen::MatrixXd& points);

// Finite-difference probe of a mixed-derivative condition (dim 1 only; for
// higher dimensions `checked` stays false and the condition is reported
// unchecked).
struct TwistReport {
  bool checked = false;
  bool ok = false;
  double min_value = 0.0;  // worst-case probed quantity (see each check)
  bool sign_constant = false;
  double worst_s1 = 0.0;
  double worst_s2 = 0.0;
};

// Twist condition: s2 -> dc/ds1 is one-to-one. Probed as strict monotonicity
// of the finite-difference dc/ds1 across the sorted s2 probes for every s1
// probe; min_value is the smallest successive |gap|.
TwistReport check_twist(const CostFn& c, const std::vector<double>& probe_s1,
                        const std::vector<double>& probe_s2);

// Martingale twist: d3 c / ds1 ds2^2 >= 0. Probed by finite differences at
// all probe pairs with tolerance -1e-8; min_value is the smallest derivative.
TwistReport check_martingale_twist(const CostFn& c,
                                   const std::vector<double>& probe_s1,
                                   const std::vector<double>& probe_s2);

}  // namespace pdot
