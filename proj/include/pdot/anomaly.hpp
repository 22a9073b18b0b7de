#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/measure.hpp"
#include "pdot/mlp.hpp"
#include "pdot/report.hpp"
#include "pdot/saddle.hpp"

namespace pdot {

// Generator network: a hidden-layer trunk plus a parallel affine skip path,
// T_hat(z) = trunk(z) + skip(z). Training data cannot constrain the map
// beyond the prior's sampled range, and a saturating trunk alone folds back
// there, which lands the shifted anomaly construction inside the bulk. The
// skip keeps the extrapolation affine; a small weight decay on the trunk
// drains the linear trend into the skip path.
struct Generator {
  Mlp trunk;  // R^l -> R^d, hidden layers
  Mlp skip;   // R^l -> R^d, affine

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& z) const {
    return trunk.forward_batch(z) + skip.forward_batch(z);
  }
  int in_dim() const { return trunk.in_dim(); }
  int out_dim() const { return trunk.out_dim(); }
};

// Generator training setup: fit T_hat : R^l -> R^d so that T_hat pushes the
// prior onto the real law in squared 2-Wasserstein distance, estimated by the
// inner saddle solver on (u, T) with cost -|s1 - s2|^2.
struct GeneratorProblem {
  Eigen::MatrixXd real_samples;  // n x d
  Measure prior = Measure::normal(0.0, 1.0);  // on R^l, l <= d
  Eigen::MatrixXd prior_samples;              // fixed draws from the prior
  Generator t_hat;                            // generator R^l -> R^d
  Mlp u;                                      // inner potential R^d -> R
  Mlp t_inner;                                // inner map R^d -> R^d
  std::int64_t inner_per_outer = 1000;
};

struct GeneratorConfig {
  std::int64_t steps = 300000;  // inner iterations total
  std::int64_t eval_every = 10000;
  double eta = 1e-3;
  double outer_eta = 1e-3;
  int minibatch = 64;
  std::int64_t n_paths = 8192;
  std::vector<int> hidden = {10, 10};  // all three networks
  Activation activation = Activation::tanh;
  std::int64_t inner_per_outer = 1000;
  std::int64_t eta_decay_every = 0;  // halve all learning rates every k steps
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;
};

GeneratorProblem make_generator_problem(const Eigen::MatrixXd& real_samples,
                                        const Measure& prior,
                                        const GeneratorConfig& cfg);

// Alternates inner Arrow-Hurwicz steps on (u, t_inner) with one outer Adam
// step on t_hat every inner_per_outer iterations. The trace records the
// estimated squared distance (negated full-sample objective) every
// eval_every steps; the reported value is the final trace entry.
TransportReport train_generator(GeneratorProblem& prob,
                                const GeneratorConfig& cfg);

// Draws n prior samples Z and returns T_hat(Z + shift * sign(Z)) row-wise;
// shift = 0 gives plain generation, shift = 3 the edge-of-support anomaly
// construction.
SampleSet generate(const Generator& t_hat, const Measure& prior,
                   std::int64_t n, std::uint64_t seed, double shift = 0.0);

// Gaussian product-kernel density estimate over M generated samples with
// per-dimension Silverman bandwidth, plus the flag threshold lambda set at a
// quantile of the generated samples' own densities.
struct AnomalyScorer {
  Eigen::MatrixXd samples;    // M x d
  Eigen::VectorXd bandwidth;  // per dimension
  double lambda = 0.0;
};

AnomalyScorer make_scorer(const Generator& t_hat, const Measure& prior,
                          std::int64_t m, std::uint64_t seed,
                          double lambda_quantile = 0.01);

double density_estimate(const AnomalyScorer& scorer, const Eigen::VectorXd& x);

struct AnomalyScore {
  Eigen::VectorXd x;
  double density = 0.0;
  bool is_anomaly = false;
};

// Flags density(x) <= lambda for each query row.
std::vector<AnomalyScore> score_anomalies(const AnomalyScorer& scorer,
                                          const Eigen::MatrixXd& xs);

}  // namespace pdot
