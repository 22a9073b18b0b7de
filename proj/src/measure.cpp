#include "pdot/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdot/errors.hpp"
#include "pdot/rng.hpp"

namespace pdot {

namespace {

void require_positive_var(const Eigen::VectorXd& var, const char* what) {
  for (Eigen::Index k = 0; k < var.size(); ++k) {
    if (!(var[k] > 0.0)) {
      throw ParameterError(std::string(what) + " must be positive");
    }
  }
}

}  // namespace

Measure Measure::normal(Eigen::VectorXd mean, Eigen::VectorXd var) {
  if (mean.size() != var.size() || mean.size() == 0) {
    throw ShapeError("normal: mean and var must have equal positive length");
  }
  require_positive_var(var, "normal: variance");
  Measure m;
  m.family_ = Family::normal;
  m.dim_ = static_cast<int>(mean.size());
  m.a_ = std::move(mean);
  m.b_ = std::move(var);
  return m;
}

Measure Measure::normal(double mean, double var, int dim) {
  if (dim < 1) throw ParameterError("normal: dim must be >= 1");
  return normal(Eigen::VectorXd::Constant(dim, mean),
                Eigen::VectorXd::Constant(dim, var));
}

Measure Measure::lognormal(Eigen::VectorXd meanlog, Eigen::VectorXd varlog) {
  if (meanlog.size() != varlog.size() || meanlog.size() == 0) {
    throw ShapeError("lognormal: meanlog and varlog must have equal positive length");
  }
  require_positive_var(varlog, "lognormal: varlog");
  Measure m;
  m.family_ = Family::lognormal;
  m.dim_ = static_cast<int>(meanlog.size());
  m.a_ = std::move(meanlog);
  m.b_ = std::move(varlog);
  return m;
}

Measure Measure::lognormal(double meanlog, double varlog, int dim) {
  if (dim < 1) throw ParameterError("lognormal: dim must be >= 1");
  return lognormal(Eigen::VectorXd::Constant(dim, meanlog),
                   Eigen::VectorXd::Constant(dim, varlog));
}

Measure Measure::empirical(Eigen::MatrixXd points, Eigen::VectorXd weights) {
  if (points.rows() == 0 || points.cols() == 0) {
    throw ShapeError("empirical: need at least one atom");
  }
  const auto n = points.rows();
  if (weights.size() == 0) {
    weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  }
  if (weights.size() != n) {
    throw ShapeError("empirical: weights length must match atom count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) {
      throw ParameterError("empirical: weights must be positive");
    }
  }
  weights /= weights.sum();

  Measure m;
  m.family_ = Family::empirical;
  m.dim_ = static_cast<int>(points.cols());
  m.points_ = std::move(points);
  m.weights_ = std::move(weights);

  m.cum_weights_.resize(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += m.weights_[i];
    m.cum_weights_[i] = acc;
  }
  m.cum_weights_[n - 1] = 1.0;

  if (m.dim_ == 1) {
    m.sorted_.resize(n);
    std::iota(m.sorted_.begin(), m.sorted_.end(), std::int64_t{0});
    std::stable_sort(m.sorted_.begin(), m.sorted_.end(),
                     [&](std::int64_t i, std::int64_t j) {
                       return m.points_(i, 0) < m.points_(j, 0);
                     });
  }
  return m;
}

SampleSet Measure::sample(std::int64_t n, std::uint64_t seed) const {
  if (n < 1) throw ParameterError("sample: n must be >= 1");
  Rng rng(seed);
  SampleSet out;
  out.seed = seed;
  out.points.resize(n, dim_);
  switch (family_) {
    case Family::normal:
      for (std::int64_t i = 0; i < n; ++i) {
        for (int k = 0; k < dim_; ++k) {
          out.points(i, k) = a_[k] + std::sqrt(b_[k]) * rng.normal();
        }
      }
      break;
    case Family::lognormal:
      for (std::int64_t i = 0; i < n; ++i) {
        for (int k = 0; k < dim_; ++k) {
          out.points(i, k) = std::exp(a_[k] + std::sqrt(b_[k]) * rng.normal());
        }
      }
      break;
    case Family::empirical:
      for (std::int64_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const auto it = std::lower_bound(
            cum_weights_.data(), cum_weights_.data() + cum_weights_.size(), u);
        const auto idx = std::min<Eigen::Index>(it - cum_weights_.data(),
                                                cum_weights_.size() - 1);
        out.points.row(i) = points_.row(idx);
      }
      break;
  }
  return out;
}

double Measure::quantile(double u) const {
  if (dim_ != 1) throw UnsupportedError("quantile: defined for dim == 1 only");
  if (!(u > 0.0 && u < 1.0)) {
    throw std::domain_error("quantile: u must lie in (0,1)");
  }
  switch (family_) {
    case Family::normal:
      return a_[0] + std::sqrt(b_[0]) * normal_quantile(u);
    case Family::lognormal:
      return std::exp(a_[0] + std::sqrt(b_[0]) * normal_quantile(u));
    case Family::empirical: {
      // Left-continuous generalized inverse over the sorted atoms.
      double acc = 0.0;
      for (std::size_t r = 0; r < sorted_.size(); ++r) {
        acc += weights_[sorted_[r]];
        if (acc >= u - 1e-15) return points_(sorted_[r], 0);
      }
      return points_(sorted_.back(), 0);
    }
  }
  throw ParameterError("quantile: unknown family");
}

double Measure::mean(int coord) const {
  switch (family_) {
    case Family::normal:
      return a_[coord];
    case Family::lognormal:
      return std::exp(a_[coord] + 0.5 * b_[coord]);
    case Family::empirical:
      return weights_.dot(points_.col(coord));
  }
  return 0.0;
}

double Measure::variance(int coord) const {
  switch (family_) {
    case Family::normal:
      return b_[coord];
    case Family::lognormal: {
      const double m = std::exp(a_[coord] + 0.5 * b_[coord]);
      return (std::exp(b_[coord]) - 1.0) * m * m;
    }
    case Family::empirical: {
      const double m = mean(coord);
      const Eigen::ArrayXd centered = points_.col(coord).array() - m;
      return (weights_.array() * centered.square()).sum();
    }
  }
  return 0.0;
}

std::vector<double> default_strike_grid(const Measure& mu1, const Measure& mu2,
                                        int n_strikes) {
  if (n_strikes < 1) throw ParameterError("default_strike_grid: n_strikes >= 1");
  const double lo = std::min(mu1.quantile(0.001), mu2.quantile(0.001));
  const double hi = std::max(mu1.quantile(0.999), mu2.quantile(0.999));
  std::vector<double> strikes(n_strikes);
  for (int k = 0; k < n_strikes; ++k) {
    const double t = n_strikes == 1 ? 0.5 : static_cast<double>(k) / (n_strikes - 1);
    strikes[k] = lo + t * (hi - lo);
  }
  return strikes;
}

ConvexOrderReport check_convex_order(const Measure& mu1, const Measure& mu2,
                                     const std::vector<double>& strikes,
                                     std::int64_t n_samples,
                                     std::uint64_t seed) {
  if (mu1.dim() != 1 || mu2.dim() != 1) {
    throw ParameterError("check_convex_order: dim == 1 required");
  }
  if (strikes.empty()) {
    throw ParameterError("check_convex_order: strikes must be non-empty");
  }
  const Eigen::ArrayXd x1 = mu1.sample(n_samples, seed).points.col(0).array();
  const Eigen::ArrayXd x2 = mu2.sample(n_samples, seed + 1).points.col(0).array();
  const double n = static_cast<double>(n_samples);

  ConvexOrderReport rep;
  const double m1 = x1.mean();
  const double m2 = x2.mean();
  const double v1 = (x1 - m1).square().sum() / (n - 1.0);
  const double v2 = (x2 - m2).square().sum() / (n - 1.0);
  rep.mean_gap = m2 - m1;
  rep.mean_tol = 3.0 * std::sqrt((v1 + v2) / n);

  bool calls_ok = true;
  rep.worst_violation = -std::numeric_limits<double>::infinity();
  for (const double k : strikes) {
    const Eigen::ArrayXd c1 = (x1 - k).max(0.0);
    const Eigen::ArrayXd c2 = (x2 - k).max(0.0);
    const double e1 = c1.mean();
    const double e2 = c2.mean();
    const double s1 = (c1 - e1).square().sum() / (n - 1.0);
    const double s2 = (c2 - e2).square().sum() / (n - 1.0);
    const double tol = 3.0 * std::sqrt((s1 + s2) / n);
    const double violation = e1 - e2;
    if (violation > rep.worst_violation) {
      rep.worst_violation = violation;
      rep.violation_tol = tol;
      rep.worst_strike = k;
    }
    if (violation > tol) calls_ok = false;
  }
  rep.ok = calls_ok && std::fabs(rep.mean_gap) <= rep.mean_tol;
  return rep;
}

}  // namespace pdot
