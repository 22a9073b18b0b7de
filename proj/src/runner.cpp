#include "pdot/runner.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "csv_impl.hpp"
#include "pdot/anomaly.hpp"
#include "pdot/errors.hpp"
#include "pdot/lp.hpp"
#include "pdot/neural_dual.hpp"
#include "pdot/rng.hpp"
#include "pdot/saddle.hpp"
#include "pdot/sinkhorn.hpp"

namespace pdot {

namespace {

std::string solver_name(SolverKind k) {
  switch (k) {
    case SolverKind::primal_dual: return "primal_dual";
    case SolverKind::predictor_corrector: return "predictor_corrector";
    case SolverKind::sinkhorn: return "sinkhorn";
    case SolverKind::neural_entropic: return "neural_entropic";
    case SolverKind::penalization: return "penalization";
    case SolverKind::lp: return "lp";
  }
  return "?";
}

void write_trace(const std::string& dir, const std::vector<TraceEntry>& trace) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(trace.size()), 2);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    rows(static_cast<Eigen::Index>(i), 0) = static_cast<double>(trace[i].step);
    rows(static_cast<Eigen::Index>(i), 1) = trace[i].objective;
  }
  detail::write_csv(dir + "/trace.csv", {"step", "objective"}, rows);
  Eigen::MatrixXd plot = rows;
  plot.col(0) /= 1e4;
  detail::write_csv(dir + "/trace_plot.csv", {"plot_index", "objective"}, plot);
}

void write_report_txt(const std::string& dir, const std::string& solver,
                      std::uint64_t seed, const TransportReport& rep) {
  std::ostringstream ss;
  ss << "solver = " << solver << "\n";
  ss << "seed = " << seed << "\n";
  ss << "steps = " << rep.steps_run << "\n";
  ss << "wall_time_s = " << detail::fmt_g10(rep.wall_seconds) << "\n";
  ss << "value = " << detail::fmt_g10(rep.value) << "\n";
  ss << "converged = " << (rep.converged ? "true" : "false") << "\n";
  if (rep.warnings.empty()) {
    ss << "warnings = none\n";
  } else {
    for (const auto& w : rep.warnings) ss << "warning = " << w << "\n";
  }
  detail::write_text_file(dir + "/report.txt", ss.str());

  std::ostringstream ds;
  for (const auto& [k, v] : rep.diagnostics) {
    ds << k << " = " << detail::fmt_g10(v) << "\n";
  }
  detail::write_text_file(dir + "/diagnostics.txt", ds.str());
}

void write_coupling(const std::string& dir, const std::vector<LpCell>& cells) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(cells.size()), 3);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    rows(static_cast<Eigen::Index>(k), 0) = cells[k].i;
    rows(static_cast<Eigen::Index>(k), 1) = cells[k].j;
    rows(static_cast<Eigen::Index>(k), 2) = cells[k].p;
  }
  detail::write_csv(dir + "/coupling.csv", {"i", "j", "p"}, rows);
}

void write_dense_coupling(const std::string& dir, const Eigen::MatrixXd& pi) {
  std::vector<LpCell> cells;
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
      if (pi(i, j) > 1e-12) {
        cells.push_back({static_cast<int>(i), static_cast<int>(j), pi(i, j)});
      }
    }
  }
  write_coupling(dir, cells);
}

void write_potentials(const std::string& dir, const Eigen::VectorXd& atoms1,
                      const Eigen::VectorXd& u1, const Eigen::VectorXd& h,
                      const Eigen::VectorXd& atoms2, const Eigen::VectorXd& u2) {
  const bool mot = h.size() > 0;
  Eigen::MatrixXd p1(atoms1.size(), mot ? 3 : 2);
  p1.col(0) = atoms1;
  p1.col(1) = u1;
  if (mot) p1.col(2) = h;
  detail::write_csv(dir + "/potentials1.csv",
                    mot ? std::vector<std::string>{"s1", "u1", "h"}
                        : std::vector<std::string>{"s1", "u1"},
                    p1);
  Eigen::MatrixXd p2(atoms2.size(), 2);
  p2.col(0) = atoms2;
  p2.col(1) = u2;
  detail::write_csv(dir + "/potentials2.csv", {"s2", "u2"}, p2);
}

SaddleConfig saddle_config(const ExperimentConfig& cfg) {
  SaddleConfig sc;
  sc.mode = cfg.mode == ProblemMode::mot ? SaddleMode::mot : SaddleMode::ot;
  sc.steps = cfg.steps;
  sc.eval_every = cfg.eval_every;
  sc.eta = cfg.eta;
  sc.minibatch = cfg.minibatch;
  sc.n_paths = cfg.n_paths;
  sc.u_hidden = cfg.u_hidden;
  sc.map_hidden = cfg.map_hidden;
  sc.activation = activation_from_string(cfg.activation);
  sc.n_maps = cfg.n_maps;
  sc.shift_cost = cfg.shift_cost;
  sc.predictor_corrector = cfg.kind == SolverKind::predictor_corrector;
  sc.eta_decay_every = cfg.eta_decay_every;
  sc.q_lr_scale = cfg.q_lr_scale;
  sc.divergence_threshold = cfg.divergence_threshold;
  sc.seed = cfg.seed;
  return sc;
}

TransportReport run_saddle(const ExperimentConfig& cfg, const std::string& dir) {
  const Measure mu1 = parse_measure(cfg.mu1_spec);
  const Measure mu2 = parse_measure(cfg.mu2_spec);
  const CostFn cost = parse_cost(cfg.cost_spec);
  const SaddleConfig sc = saddle_config(cfg);
  SaddleProblem prob = make_saddle_problem(mu1, mu2, cost, sc);
  TransportReport rep = solve(prob, sc);
  if (rep.map_samples.rows() > 0) {
    detail::write_csv(dir + "/map.csv", rep.map_header, rep.map_samples);
  }
  return rep;
}

TransportReport run_sinkhorn_solver(const ExperimentConfig& cfg,
                                    const std::string& dir) {
  const Measure mu1 = parse_measure(cfg.mu1_spec);
  const Measure mu2 = parse_measure(cfg.mu2_spec);
  const CostFn cost = parse_cost(cfg.cost_spec);
  const bool mot = cfg.mode == ProblemMode::mot;
  const auto t0 = std::chrono::steady_clock::now();
  const DiscreteProblem prob =
      make_discrete_problem(mu1, mu2, cost, cfg.n_atoms, cfg.eps, mot);
  const SinkhornResult res = mot ? sinkhorn_mot(prob, cfg.max_iter, cfg.tol)
                                 : sinkhorn_ot(prob, cfg.max_iter, cfg.tol);
  TransportReport rep;
  rep.value = res.value;
  rep.converged = res.converged;
  rep.steps_run = res.state.iterations;
  for (std::size_t k = 0; k < res.dual_trace.size(); ++k) {
    rep.trace.push_back({static_cast<std::int64_t>(k + 1), res.dual_trace[k]});
  }
  rep.diagnostics["residual_marginal1"] = res.state.residual1;
  rep.diagnostics["residual_marginal2"] = res.state.residual2;
  rep.diagnostics["residual_martingale"] = res.state.residual_mart;
  rep.diagnostics["eps"] = prob.eps;
  rep.diagnostics["mean_shift"] = prob.mean_shift;
  if (mot && prob.mean_shift != 0.0) {
    rep.warnings.push_back("second marginal atoms mean-matched by shift " +
                           detail::fmt_g10(prob.mean_shift));
  }
  if (!res.converged) {
    rep.warnings.push_back("sinkhorn hit max_iter before reaching tol");
  }
  write_dense_coupling(dir, sinkhorn_coupling(prob, res.state));
  write_potentials(dir, prob.atoms1.col(0), res.state.u1, res.state.h,
                   prob.atoms2.col(0), res.state.u2);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

TransportReport run_lp_solver(const ExperimentConfig& cfg,
                              const std::string& dir) {
  const Measure mu1 = parse_measure(cfg.mu1_spec);
  const Measure mu2 = parse_measure(cfg.mu2_spec);
  const CostFn cost = parse_cost(cfg.cost_spec);
  const bool mot = cfg.mode == ProblemMode::mot;
  const auto t0 = std::chrono::steady_clock::now();
  const LpInstance inst = make_lp_instance(mu1, mu2, cost, cfg.n_atoms, mot);
  const LpMethod method = cfg.lp_method == "cutting_plane"
                              ? LpMethod::cutting_plane
                              : LpMethod::dense_simplex;
  const LpSolution sol = solve_lp(inst, method);
  TransportReport rep;
  rep.value = sol.value;
  rep.converged = true;
  rep.steps_run = sol.pivots;
  for (std::size_t k = 0; k < sol.round_values.size(); ++k) {
    rep.trace.push_back({static_cast<std::int64_t>(k + 1), sol.round_values[k]});
  }
  rep.diagnostics["dual_value"] = sol.dual_value;
  rep.diagnostics["duality_gap"] = std::fabs(sol.value - sol.dual_value);
  rep.diagnostics["pivots"] = static_cast<double>(sol.pivots);
  rep.diagnostics["rounds"] = sol.rounds;
  rep.diagnostics["max_violation"] = sol.max_violation;
  rep.diagnostics["mean_shift"] = sol.mean_shift;
  if (mot && sol.mean_shift != 0.0) {
    rep.warnings.push_back("second marginal atoms mean-matched by shift " +
                           detail::fmt_g10(sol.mean_shift));
  }
  write_coupling(dir, sol.coupling);
  write_potentials(dir, inst.atoms1, sol.u1, sol.h, inst.atoms2, sol.u2);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

TransportReport run_neural(const ExperimentConfig& cfg) {
  const Measure mu1 = parse_measure(cfg.mu1_spec);
  const Measure mu2 = parse_measure(cfg.mu2_spec);
  const CostFn cost = parse_cost(cfg.cost_spec);
  NeuralDualConfig nc;
  nc.steps = cfg.steps;
  nc.eval_every = cfg.eval_every;
  nc.eta = cfg.eta;
  nc.minibatch = cfg.minibatch;
  nc.n_paths = cfg.n_paths;
  nc.hidden = cfg.u_hidden;
  nc.activation = activation_from_string(cfg.activation);
  nc.eps_start = cfg.eps_start;
  nc.anneal_frac = cfg.anneal_frac;
  nc.grad_clip = cfg.grad_clip;
  nc.divergence_threshold = cfg.divergence_threshold;
  nc.seed = cfg.seed;
  const SaddleMode mode =
      cfg.mode == ProblemMode::mot ? SaddleMode::mot : SaddleMode::ot;
  NeuralDualProblem prob = make_neural_dual_problem(mu1, mu2, cost, mode, nc);
  TransportReport rep = cfg.kind == SolverKind::neural_entropic
                            ? neural_entropic(prob, cfg.eps, nc)
                            : penalization(prob, cfg.gamma, nc);
  const auto clip = rep.diagnostics.find("clip_count");
  if (clip != rep.diagnostics.end() && clip->second > 0) {
    rep.warnings.push_back("exponent clamp engaged " +
                           detail::fmt_g10(clip->second) + " times");
  }
  return rep;
}

TransportReport run_anomaly(const ExperimentConfig& cfg, const std::string& dir) {
  const Measure real = parse_measure(cfg.real_spec);
  const Measure prior = parse_measure(cfg.prior_spec);
  if (cfg.prior_dim > 0 && prior.dim() != cfg.prior_dim) {
    throw ParameterError("problem.prior_dim does not match the prior spec");
  }
  GeneratorConfig gc;
  gc.steps = cfg.steps;
  gc.eval_every = cfg.eval_every;
  gc.eta = cfg.eta;
  gc.outer_eta = cfg.outer_eta;
  gc.minibatch = cfg.minibatch;
  gc.n_paths = cfg.n_paths;
  gc.hidden = cfg.u_hidden;
  gc.activation = activation_from_string(cfg.activation);
  gc.inner_per_outer = cfg.inner_per_outer;
  gc.eta_decay_every = cfg.eta_decay_every;
  gc.divergence_threshold = cfg.divergence_threshold;
  gc.seed = cfg.seed;

  const Eigen::MatrixXd real_samples =
      real.sample(cfg.n_paths, derive_seed(cfg.seed, 6)).points;
  GeneratorProblem prob = make_generator_problem(real_samples, prior, gc);
  TransportReport rep = train_generator(prob, gc);

  if (rep.converged) {
    const AnomalyScorer scorer = make_scorer(
        prob.t_hat, prior, cfg.m_kde, derive_seed(cfg.seed, 8),
        cfg.lambda_quantile);
    const SampleSet normal_pts =
        generate(prob.t_hat, prior, cfg.n_score, derive_seed(cfg.seed, 9), 0.0);
    const SampleSet abnormal_pts =
        generate(prob.t_hat, prior, cfg.n_score, derive_seed(cfg.seed, 10), 3.0);
    const auto sn = score_anomalies(scorer, normal_pts.points);
    const auto sa = score_anomalies(scorer, abnormal_pts.points);

    const int d = static_cast<int>(real_samples.cols());
    std::vector<std::string> header;
    for (int k = 0; k < d; ++k) header.push_back("x" + std::to_string(k + 1));
    detail::write_csv(dir + "/scatter_real.csv", header, real_samples);

    auto dump = [&](const std::vector<AnomalyScore>& scores, int label,
                    Eigen::MatrixXd& rows, Eigen::Index at) {
      for (const auto& s : scores) {
        for (int k = 0; k < d; ++k) rows(at, k) = s.x[k];
        rows(at, d) = s.density;
        rows(at, d + 1) = s.is_anomaly ? 1.0 : 0.0;
        rows(at, d + 2) = label;
        ++at;
      }
      return at;
    };
    std::vector<std::string> sheader = header;
    sheader.push_back("density");
    sheader.push_back("flag");
    sheader.push_back("label");
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(sn.size() + sa.size()), d + 3);
    Eigen::Index at = dump(sn, 0, rows, 0);
    dump(sa, 1, rows, at);
    detail::write_csv(dir + "/scores.csv", sheader, rows);
    detail::write_csv(dir + "/scatter_normal.csv", sheader,
                      rows.topRows(static_cast<Eigen::Index>(sn.size())));
    detail::write_csv(dir + "/scatter_abnormal.csv", sheader,
                      rows.bottomRows(static_cast<Eigen::Index>(sa.size())));

    double flagged_n = 0.0, flagged_a = 0.0;
    for (const auto& s : sn) flagged_n += s.is_anomaly ? 1.0 : 0.0;
    for (const auto& s : sa) flagged_a += s.is_anomaly ? 1.0 : 0.0;
    rep.diagnostics["lambda"] = scorer.lambda;
    rep.diagnostics["flag_rate_normal"] = flagged_n / sn.size();
    rep.diagnostics["flag_rate_abnormal"] = flagged_a / sa.size();
  }
  return rep;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg0, const RunOverrides& ov) {
  ExperimentConfig cfg = cfg0;
  if (ov.seed) {
    cfg.seed = *ov.seed;
    cfg.seed_set = true;
  }
  if (ov.steps) cfg.steps = *ov.steps;
  const std::string dir = ov.out_dir ? *ov.out_dir : cfg.out_dir;
  detail::ensure_dir(dir);

  TransportReport rep;
  if (cfg.mode == ProblemMode::anomaly) {
    rep = run_anomaly(cfg, dir);
  } else {
    switch (cfg.kind) {
      case SolverKind::primal_dual:
      case SolverKind::predictor_corrector:
        rep = run_saddle(cfg, dir);
        break;
      case SolverKind::sinkhorn:
        rep = run_sinkhorn_solver(cfg, dir);
        break;
      case SolverKind::lp:
        rep = run_lp_solver(cfg, dir);
        break;
      case SolverKind::neural_entropic:
      case SolverKind::penalization:
        rep = run_neural(cfg);
        break;
    }
  }

  write_trace(dir, rep.trace);
  write_report_txt(dir, solver_name(cfg.kind), cfg.seed, rep);

  RunResult rr;
  rr.exit_code = rep.converged ? 0 : 2;
  rr.report = rep;
  rr.out_dir = dir;
  return rr;
}

}  // namespace pdot
