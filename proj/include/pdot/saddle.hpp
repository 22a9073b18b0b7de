#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/cost.hpp"
#include "pdot/measure.hpp"
#include "pdot/mlp.hpp"
#include "pdot/report.hpp"
#include "pdot/rng.hpp"

namespace pdot {

enum class SaddleMode { ot, mot };

// Solver hyperparameters. Defaults follow the d = 1 experiments: 2^13 Monte
// Carlo paths, minibatches of 64, Adam at 1e-3, nets with two hidden layers
// of width 4.
struct SaddleConfig {
  SaddleMode mode = SaddleMode::ot;
  std::int64_t steps = 200000;
  std::int64_t eval_every = 10000;
  double eta = 1e-3;
  int minibatch = 64;
  std::int64_t n_paths = 8192;
  std::vector<int> u_hidden = {4, 4};    // also used for h
  std::vector<int> map_hidden = {4, 4};  // also used for q
  Activation activation = Activation::tanh;
  int n_maps = 2;  // mot mixture size
  bool shift_cost = true;
  bool predictor_corrector = false;
  // Halve eta every this many steps; 0 keeps it constant.
  std::int64_t eta_decay_every = 0;
  // Learning-rate scale for the q networks relative to eta.
  double q_lr_scale = 1.0;
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;
};

// The sampled saddle-point problem together with its networks. The networks
// are updated in place by the solver; after solve() they hold the learned
// potential and maps. In mot mode the inf block is {u, h} and the sup block
// {maps, q} with n_maps - 1 logit networks (the last mixture weight is one
// minus the rest, each squashed through a sigmoid).
struct SaddleProblem {
  SaddleMode mode = SaddleMode::ot;
  CostFn cost;                    // cost as optimized (shifted when enabled)
  double value_correction = 0.0;  // E^{mu2}[U] added back to reported values
  Eigen::MatrixXd s1, s2;         // fixed Monte Carlo clouds, n x d
  Measure mu1 = Measure::normal(0.0, 1.0);
  Measure mu2 = Measure::normal(0.0, 1.0);
  Mlp u;
  std::vector<Mlp> maps;  // ot: {T}; mot: {T_u, T_d, ...}
  Mlp h;                  // mot only
  std::vector<Mlp> q;     // mot only, raw logits
  std::vector<std::string> warnings;

  int dim() const { return static_cast<int>(s1.cols()); }
};

// Samples the marginals, applies the cost shift when configured, and builds
// the networks. Warns (in problem.warnings) rather than aborts when the cost
// is not concave in s2 or, for mot, when the convex-order check fails.
SaddleProblem make_saddle_problem(const Measure& mu1, const Measure& mu2,
                                  const CostFn& cost, const SaddleConfig& cfg);

// Mutable optimizer state of one run.
struct SaddleState {
  AdamState u_opt;
  std::vector<AdamState> map_opt;
  AdamState h_opt;
  std::vector<AdamState> q_opt;
  std::int64_t step = 0;
  int minibatch = 64;
  bool predictor_corrector = false;
  double eta0 = 1e-3;
  std::int64_t eta_decay_every = 0;
  double q_lr_scale = 1.0;
  double divergence_threshold = 1e8;
  Rng rng{0};
  std::vector<TraceEntry> trace;

  // Learning rate in force at `step` under the decay schedule.
  double eta_at(std::int64_t step) const;
};

SaddleState make_saddle_state(const SaddleProblem& prob, const SaddleConfig& cfg);

// Minibatch objective: mean over the batch rows b of
//   c(S1_b, T(S1_b)) - u(T(S1_b)) + u(S2_b).
double objective_ot(const SaddleProblem& prob,
                    const std::vector<std::int64_t>& batch);

// Minibatch objective: mean over batch rows of
//   sum_k q_k(S1)[c(S1,T_k(S1)) - u(T_k(S1)) - h(S1).(T_k(S1)-S1)] + u(S2).
double objective_mot(const SaddleProblem& prob,
                     const std::vector<std::int64_t>& batch);

// Objective over the full sample (dispatches on mode).
double objective_full(const SaddleProblem& prob);

// One Arrow-Hurwicz update on a fresh minibatch: descent on the inf block at
// the current point, then ascent on the sup block at the updated inf block.
// Throws DivergedError on non-finite gradients.
void ah_step(SaddleState& state, SaddleProblem& prob);

// Predictor-corrector variant: each block takes a half (predictor) step and
// re-evaluates its gradient there before committing, same block order and
// same minibatch throughout the four stages.
void ah_step_predictor_corrector(SaddleState& state, SaddleProblem& prob);

// Full run: steps iterations with a full-sample trace entry every eval_every.
// The reported value is the mean of the last 5 trace entries plus the shift
// correction. Divergence is caught and returned as a non-converged report
// with the partial trace.
TransportReport solve(SaddleProblem& prob, const SaddleConfig& cfg);

// Sup-error between the learned map (column "T" of report.map_samples) and
// the comonotone rearrangement F2^-1 . F1 on the u in [0.05, 0.95] part of
// the quantile grid. Requires an ot-mode report with map samples.
double map_error_vs_frechet_hoeffding(const TransportReport& report,
                                      const Measure& mu1, const Measure& mu2);

}  // namespace pdot
