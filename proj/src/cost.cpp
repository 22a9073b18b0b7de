#include "pdot/cost.hpp"

#include <algorithm>
#include <cmath>

#include "pdot/errors.hpp"

namespace pdot {

namespace {

double ipow(double x, int p) {
  double r = 1.0;
  for (int k = 0; k < p; ++k) r *= x;
  return r;
}

void check_dims(const CostFn& c, Eigen::Index d1, Eigen::Index d2) {
  if (d1 != d2) throw ShapeError(c.name() + ": s1 and s2 dimensions differ");
  if (c.dim() != 0 && d1 != c.dim()) {
    throw ShapeError(c.name() + ": expects dimension " + std::to_string(c.dim()));
  }
}

}  // namespace

double CostFn::eval_one(const double* s1, const double* s2, int d) const {
  double v = 0.0;
  switch (kind_) {
    case Kind::sum_squared: {
      const double s = s1[0] + s2[0];
      v = s * s;
      break;
    }
    case Kind::neg_diff_squared: {
      const double s = s1[0] - s2[0];
      v = -s * s;
      break;
    }
    case Kind::neg_l2sq: {
      for (int k = 0; k < d; ++k) {
        const double s = s1[k] - s2[k];
        v -= s * s;
      }
      break;
    }
    case Kind::cubic_sum: {
      const double s = s1[0] + s2[0];
      v = s * s * s;
      break;
    }
    case Kind::polynomial: {
      for (const auto& t : terms_) {
        v += t.coef * ipow(s1[0], t.p1) * ipow(s2[0], t.p2);
      }
      break;
    }
  }
  if (shifted_) {
    for (int k = 0; k < d; ++k) {
      v -= shift_y3_ * ipow(s2[k], 3) + shift_y2_ * s2[k] * s2[k];
    }
  }
  return v;
}

void CostFn::grad_one(const double* s1, const double* s2, int d,
                      double* out) const {
  switch (kind_) {
    case Kind::sum_squared:
      out[0] = 2.0 * (s1[0] + s2[0]);
      break;
    case Kind::neg_diff_squared:
      out[0] = 2.0 * (s1[0] - s2[0]);
      break;
    case Kind::neg_l2sq:
      for (int k = 0; k < d; ++k) out[k] = 2.0 * (s1[k] - s2[k]);
      break;
    case Kind::cubic_sum: {
      const double s = s1[0] + s2[0];
      out[0] = 3.0 * s * s;
      break;
    }
    case Kind::polynomial: {
      // Central finite difference in s2 (custom costs carry no analytic form).
      const double h = 1e-5;
      double yp = s2[0] + h, ym = s2[0] - h;
      double vp = 0.0, vm = 0.0;
      for (const auto& t : terms_) {
        vp += t.coef * ipow(s1[0], t.p1) * ipow(yp, t.p2);
        vm += t.coef * ipow(s1[0], t.p1) * ipow(ym, t.p2);
      }
      out[0] = (vp - vm) / (2.0 * h);
      break;
    }
  }
  if (shifted_) {
    for (int k = 0; k < d; ++k) {
      out[k] -= 3.0 * shift_y3_ * s2[k] * s2[k] + 2.0 * shift_y2_ * s2[k];
    }
  }
}

double CostFn::eval(const Eigen::VectorXd& s1, const Eigen::VectorXd& s2) const {
  check_dims(*this, s1.size(), s2.size());
  return eval_one(s1.data(), s2.data(), static_cast<int>(s1.size()));
}

Eigen::VectorXd CostFn::grad_s2(const Eigen::VectorXd& s1,
                                const Eigen::VectorXd& s2) const {
  check_dims(*this, s1.size(), s2.size());
  Eigen::VectorXd out(s1.size());
  grad_one(s1.data(), s2.data(), static_cast<int>(s1.size()), out.data());
  return out;
}

Eigen::VectorXd CostFn::eval_batch(const Eigen::MatrixXd& x1,
                                   const Eigen::MatrixXd& x2) const {
  check_dims(*this, x1.cols(), x2.cols());
  if (x1.rows() != x2.rows()) throw ShapeError(name_ + ": batch sizes differ");
  const int d = static_cast<int>(x1.cols());
  Eigen::VectorXd out(x1.rows());
  Eigen::RowVectorXd r1(d), r2(d);
  for (Eigen::Index b = 0; b < x1.rows(); ++b) {
    r1 = x1.row(b);
    r2 = x2.row(b);
    out[b] = eval_one(r1.data(), r2.data(), d);
  }
  return out;
}

Eigen::MatrixXd CostFn::grad_s2_batch(const Eigen::MatrixXd& x1,
                                      const Eigen::MatrixXd& x2) const {
  check_dims(*this, x1.cols(), x2.cols());
  if (x1.rows() != x2.rows()) throw ShapeError(name_ + ": batch sizes differ");
  const int d = static_cast<int>(x1.cols());
  Eigen::MatrixXd out(x1.rows(), d);
  Eigen::RowVectorXd r1(d), r2(d), g(d);
  for (Eigen::Index b = 0; b < x1.rows(); ++b) {
    r1 = x1.row(b);
    r2 = x2.row(b);
    grad_one(r1.data(), r2.data(), d, g.data());
    out.row(b) = g;
  }
  return out;
}

double CostFn::shift_value(const Eigen::VectorXd& y) const {
  double v = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    v += shift_y3_ * ipow(y[k], 3) + shift_y2_ * y[k] * y[k];
  }
  return v;
}

CostFn builtin_cost(const std::string& name) {
  CostFn c;
  c.name_ = name;
  if (name == "sum_squared") {
    c.kind_ = CostFn::Kind::sum_squared;
    c.dim_ = 1;
    c.concave_ = false;
    c.has_shift_ = true;  // U(y) = 2 y^2
  } else if (name == "neg_diff_squared") {
    c.kind_ = CostFn::Kind::neg_diff_squared;
    c.dim_ = 1;
    c.concave_ = true;
    c.has_shift_ = true;  // U = 0
  } else if (name == "neg_l2sq_d") {
    c.kind_ = CostFn::Kind::neg_l2sq;
    c.dim_ = 0;
    c.concave_ = true;
    c.has_shift_ = true;  // U = 0
  } else if (name == "cubic_sum") {
    c.kind_ = CostFn::Kind::cubic_sum;
    c.dim_ = 1;
    c.concave_ = false;
    c.has_shift_ = true;
    c.shift_needs_domain_ = true;  // U(y) = y^3 + 3*max(s1)*y^2
  } else {
    throw ParameterError("builtin_cost: unknown cost \"" + name + "\"");
  }
  return c;
}

CostFn polynomial_cost(std::vector<PolyTerm> terms, std::string name) {
  if (terms.empty()) throw ParameterError("polynomial_cost: no terms");
  for (const auto& t : terms) {
    if (t.p1 < 0 || t.p2 < 0) {
      throw ParameterError("polynomial_cost: negative powers not allowed");
    }
  }
  CostFn c;
  c.kind_ = CostFn::Kind::polynomial;
  c.name_ = std::move(name);
  c.dim_ = 1;
  c.concave_ = false;
  c.has_shift_ = false;
  c.terms_ = std::move(terms);
  return c;
}

CostFn shifted_cost(const CostFn& c, double s1_max) {
  if (!c.has_shift_) {
    throw UnsupportedError("shifted_cost: " + c.name_ + " has no shift function");
  }
  if (c.shifted_) throw ParameterError("shifted_cost: cost already shifted");
  CostFn out = c;
  out.shifted_ = true;
  out.concave_ = true;
  out.name_ = c.name_ + "_shifted";
  switch (c.kind_) {
    case CostFn::Kind::sum_squared:
      out.shift_y2_ = 2.0;
      break;
    case CostFn::Kind::cubic_sum:
      // d2/dy2 [(x+y)^3 - y^3 - beta y^2] = 6x - 2 beta <= 0 for all sampled x
      // once beta = 3 * max(x).
      if (!std::isfinite(s1_max)) {
        throw ParameterError(
            "shifted_cost: cubic_sum needs the largest s1 sample to fix its shift");
      }
      out.shift_y3_ = 1.0;
      out.shift_y2_ = 3.0 * s1_max;
      break;
    default:
      break;  // U = 0: already concave
  }
  return out;
}

double shift_mean(const CostFn& shifted, const Eigen::MatrixXd& points) {
  double acc = 0.0;
  Eigen::VectorXd row(points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    row = points.row(i);
    acc += shifted.shift_value(row);
  }
  return points.rows() > 0 ? acc / static_cast<double>(points.rows()) : 0.0;
}

namespace {

double eval_pair(const CostFn& c, double x, double y) {
  Eigen::VectorXd s1(1), s2(1);
  s1[0] = x;
  s2[0] = y;
  return c.eval(s1, s2);
}

}  // namespace

TwistReport check_twist(const CostFn& c, const std::vector<double>& probe_s1,
                        const std::vector<double>& probe_s2) {
  if (probe_s1.empty() || probe_s2.empty()) {
    throw ParameterError("check_twist: probes must be non-empty");
  }
  TwistReport rep;
  if (c.dim() != 1 && c.dim() != 0) return rep;  // unchecked for d > 1
  rep.checked = true;

  std::vector<double> s2s = probe_s2;
  std::sort(s2s.begin(), s2s.end());
  const double h = 1e-4;
  rep.ok = true;
  rep.sign_constant = true;
  rep.min_value = std::numeric_limits<double>::infinity();
  int global_sign = 0;
  for (const double x : probe_s1) {
    int row_sign = 0;
    for (std::size_t j = 0; j + 1 < s2s.size(); ++j) {
      const double g0 =
          (eval_pair(c, x + h, s2s[j]) - eval_pair(c, x - h, s2s[j])) / (2 * h);
      const double g1 =
          (eval_pair(c, x + h, s2s[j + 1]) - eval_pair(c, x - h, s2s[j + 1])) /
          (2 * h);
      const double gap = g1 - g0;
      if (std::fabs(gap) < rep.min_value) {
        rep.min_value = std::fabs(gap);
        rep.worst_s1 = x;
        rep.worst_s2 = s2s[j];
      }
      const int sgn = gap > 1e-9 ? 1 : (gap < -1e-9 ? -1 : 0);
      if (sgn == 0) {
        rep.ok = false;
      } else if (row_sign == 0) {
        row_sign = sgn;
      } else if (sgn != row_sign) {
        rep.ok = false;
      }
    }
    if (global_sign == 0) {
      global_sign = row_sign;
    } else if (row_sign != 0 && row_sign != global_sign) {
      rep.sign_constant = false;
    }
  }
  if (!rep.ok) rep.sign_constant = false;
  return rep;
}

TwistReport check_martingale_twist(const CostFn& c,
                                   const std::vector<double>& probe_s1,
                                   const std::vector<double>& probe_s2) {
  if (probe_s1.empty() || probe_s2.empty()) {
    throw ParameterError("check_martingale_twist: probes must be non-empty");
  }
  TwistReport rep;
  if (c.dim() != 1 && c.dim() != 0) return rep;
  rep.checked = true;

  const double h1 = 0.02, h2 = 0.02;
  rep.ok = true;
  rep.min_value = std::numeric_limits<double>::infinity();
  for (const double x : probe_s1) {
    for (const double y : probe_s2) {
      const double up = eval_pair(c, x + h1, y + h2) -
                        2.0 * eval_pair(c, x + h1, y) +
                        eval_pair(c, x + h1, y - h2);
      const double dn = eval_pair(c, x - h1, y + h2) -
                        2.0 * eval_pair(c, x - h1, y) +
                        eval_pair(c, x - h1, y - h2);
      const double d3 = (up - dn) / (2.0 * h1 * h2 * h2);
      if (d3 < rep.min_value) {
        rep.min_value = d3;
        rep.worst_s1 = x;
        rep.worst_s2 = y;
      }
      if (d3 < -1e-8) rep.ok = false;
    }
  }
  rep.sign_constant = rep.ok;
  return rep;
}

}  // namespace pdot
