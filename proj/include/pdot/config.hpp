#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdot/cost.hpp"
#include "pdot/measure.hpp"
#include "pdot/mlp.hpp"

namespace pdot {

enum class SolverKind {
  primal_dual,
  predictor_corrector,
  sinkhorn,
  neural_entropic,
  penalization,
  lp,
};

enum class ProblemMode { ot, mot, anomaly };

// Parsed experiment description. Flat key = value lines under [problem],
// [solver] and [output] sections; see configs/ for the bundled experiments.
struct ExperimentConfig {
  // [problem]
  ProblemMode mode = ProblemMode::ot;
  std::string cost_spec = "sum_squared";
  int dim = 1;
  std::string mu1_spec, mu2_spec;      // ot / mot
  std::string real_spec, prior_spec;   // anomaly
  int prior_dim = 0;                   // 0 = same as dim

  // [solver]
  SolverKind kind = SolverKind::primal_dual;
  std::int64_t steps = 0;
  std::int64_t eval_every = 10000;
  double eta = 1e-3;
  int minibatch = 64;
  std::int64_t n_paths = 8192;
  std::vector<int> u_hidden = {4, 4};
  std::vector<int> map_hidden = {4, 4};
  std::string activation = "tanh";
  bool shift_cost = true;
  int n_maps = 2;
  std::int64_t eta_decay_every = 0;
  double q_lr_scale = 1.0;
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;
  bool seed_set = false;
  // entropic / discrete
  double eps = 0.0;
  int n_atoms = 0;
  std::int64_t max_iter = 200000;
  double tol = 1e-6;
  double eps_start = 0.0;
  double anneal_frac = 0.5;
  double grad_clip = 0.0;
  // penalization
  double gamma = 0.0;
  // lp
  std::string lp_method = "dense_simplex";
  // anomaly
  std::int64_t inner_per_outer = 1000;
  double outer_eta = 1e-3;
  std::int64_t m_kde = 10000;
  double lambda_quantile = 0.01;
  std::int64_t n_score = 10000;

  // [output]
  std::string out_dir = "out/run";
  bool dump_params = false;
};

// Parses and validates a config file. Throws ParseError on syntax problems
// and ParameterError naming the missing or invalid field.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Builds a Measure from a spec string such as
//   "lognormal meanlog=-0.02 varlog=0.04 dim=2"
//   "normal mean=0 var=1"
//   "empirical file=atoms.csv"
// Parametric specs replicate their parameters over dim coordinates.
Measure parse_measure(const std::string& spec);

// Builds a CostFn from a spec string: a builtin name (sum_squared,
// neg_diff_squared, neg_l2sq_d, cubic_sum) or "poly" followed by a sum of
// monomials, e.g. "poly 2*s1^2*s2 + 0.5*s2^3 + -1*s1".
CostFn parse_cost(const std::string& spec);

}  // namespace pdot
