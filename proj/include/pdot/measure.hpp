#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace pdot {

// A batch of draws from a measure, one row per sample.
struct SampleSet {
  Eigen::MatrixXd points;  // n x dim
  std::uint64_t seed = 0;

  std::int64_t size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
};

enum class Family { normal, lognormal, empirical };

// A probability measure on R^d. Parametric families have independent
// coordinates with per-coordinate parameters; empirical measures are weighted
// atom sets. Sampling is by inverse CDF per coordinate (parametric) or by
// weighted atom draw (empirical), so streams are platform independent.
class Measure {
 public:
  // Normal with per-coordinate mean and variance.
  static Measure normal(Eigen::VectorXd mean, Eigen::VectorXd var);
  static Measure normal(double mean, double var, int dim = 1);

  // Lognormal: exp(N(meanlog, varlog)) per coordinate.
  static Measure lognormal(Eigen::VectorXd meanlog, Eigen::VectorXd varlog);
  static Measure lognormal(double meanlog, double varlog, int dim = 1);

  // Weighted atoms (rows of `points`). Empty `weights` means uniform.
  // Weights must be nonnegative and are normalized to sum to one.
  static Measure empirical(Eigen::MatrixXd points, Eigen::VectorXd weights = {});

  Family family() const { return family_; }
  int dim() const { return dim_; }

  SampleSet sample(std::int64_t n, std::uint64_t seed) const;

  // Generalized inverse CDF at level u in (0,1); requires dim == 1.
  double quantile(double u) const;

  // Exact moments for parametric families, weighted moments for empirical.
  double mean(int coord = 0) const;
  double variance(int coord = 0) const;

  // Parametric per-coordinate parameters (normal: mean/var,
  // lognormal: meanlog/varlog).
  const Eigen::VectorXd& param_a() const { return a_; }
  const Eigen::VectorXd& param_b() const { return b_; }

  // Empirical atoms and normalized weights.
  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }

 private:
  Measure() = default;

  Family family_ = Family::normal;
  int dim_ = 1;
  Eigen::VectorXd a_, b_;      // parametric families
  Eigen::MatrixXd points_;     // empirical
  Eigen::VectorXd weights_;
  Eigen::VectorXd cum_weights_;
  std::vector<std::int64_t> sorted_;  // atom order for 1-d quantiles
};

// Result of the sampled convex-order test E[(S1-K)+] <= E[(S2-K)+].
struct ConvexOrderReport {
  bool ok = false;
  double mean_gap = 0.0;         // E[S2] - E[S1]
  double mean_tol = 0.0;
  double worst_violation = 0.0;  // largest E[(S1-K)+] - E[(S2-K)+] over strikes
  double violation_tol = 0.0;    // 3-sigma tolerance at the worst strike
  double worst_strike = 0.0;
};

// Linear strike grid spanning the 0.1%..99.9% quantile range of both
// measures (dim == 1).
std::vector<double> default_strike_grid(const Measure& mu1, const Measure& mu2,
                                        int n_strikes);

// Monte Carlo check that mu1 is dominated by mu2 in convex order, a necessary
// and sufficient condition for a martingale coupling to exist: call prices
// E[(S-K)+] must be ordered at every strike and the means equal, both up to
// three standard errors at n_samples draws. Requires dim == 1.
ConvexOrderReport check_convex_order(const Measure& mu1, const Measure& mu2,
                                     const std::vector<double>& strikes,
                                     std::int64_t n_samples,
                                     std::uint64_t seed);

}  // namespace pdot
