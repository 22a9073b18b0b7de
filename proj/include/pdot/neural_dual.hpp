#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pdot/cost.hpp"
#include "pdot/measure.hpp"
#include "pdot/mlp.hpp"
#include "pdot/report.hpp"
#include "pdot/saddle.hpp"

namespace pdot {

// Sampled problem for the neural entropic and penalization baselines:
// networks u1, u2 (and h in mot mode) trained by plain Adam descent on the
// dual objective, with the prior P0 = mu1 x mu2 sampled by independent
// indices into the two clouds.
struct NeuralDualProblem {
  SaddleMode mode = SaddleMode::ot;
  CostFn cost;  // unshifted; these formulations need no concavity
  Eigen::MatrixXd s1, s2;
  Measure mu1 = Measure::normal(0.0, 1.0);
  Measure mu2 = Measure::normal(0.0, 1.0);
  Mlp u1, u2;
  Mlp h;  // mot only
};

struct NeuralDualConfig {
  std::int64_t steps = 100000;
  std::int64_t eval_every = 10000;
  double eta = 1e-3;
  int minibatch = 64;
  std::int64_t n_paths = 8192;
  std::vector<int> hidden = {4, 4};
  Activation activation = Activation::tanh;
  // Entropic continuation: when eps_start > target eps, the regularization
  // decays geometrically from eps_start to eps over the first anneal_frac of
  // the run. At small eps a cold start puts every exponent beyond the clamp,
  // which kills the gradient; annealing keeps the exponents informative.
  double eps_start = 0.0;  // 0 disables annealing
  double anneal_frac = 0.5;
  // Cap on the global gradient norm per step (0 disables). The exponential
  // weights are heavy-tailed at small eps; a single large sample otherwise
  // floods Adam's second-moment estimate and stalls every parameter for
  // thousands of steps afterwards.
  double grad_clip = 0.0;
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;
};

NeuralDualProblem make_neural_dual_problem(const Measure& mu1,
                                           const Measure& mu2,
                                           const CostFn& cost, SaddleMode mode,
                                           const NeuralDualConfig& cfg);

// Minimizes E[u1] + E[u2] + eps * E^{P0}[exp((c - u1 - u2 - h.dS)/eps)].
// Exponents are clamped at +30 before exponentiation; the clip count over
// the run is reported in diagnostics ("clip_count"). The trace records the
// minimized dual objective; the reported value is the primal estimate
// E^pi[c] under the coupling implied by the final potentials after one
// exact Sinkhorn polish on the sample clouds, which makes it the quantity
// comparable with sinkhorn_ot at the same eps.
TransportReport neural_entropic(NeuralDualProblem& prob, double eps,
                                const NeuralDualConfig& cfg);

// Minimizes E[u1] + E[u2] + gamma * E^{P0}[((c - u1 - u2 - h.dS))_+^2].
// gamma = 0 makes the objective unbounded below; the divergence detector
// (|objective| over the threshold) fires and yields a non-converged report.
TransportReport penalization(NeuralDualProblem& prob, double gamma,
                             const NeuralDualConfig& cfg);

}  // namespace pdot
