#include "pdot/anomaly.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pdot/errors.hpp"
#include "pdot/rng.hpp"

namespace pdot {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, Rng& rng, int b) {
  Eigen::MatrixXd out(b, x.cols());
  for (int r = 0; r < b; ++r) out.row(r) = x.row(rng.index(x.rows()));
  return out;
}

}  // namespace

GeneratorProblem make_generator_problem(const Eigen::MatrixXd& real_samples,
                                        const Measure& prior,
                                        const GeneratorConfig& cfg) {
  if (real_samples.rows() < 2) {
    throw ParameterError("make_generator_problem: need at least 2 real samples");
  }
  const int d = static_cast<int>(real_samples.cols());
  const int l = prior.dim();
  if (l > d) {
    throw ShapeError(
        "make_generator_problem: prior dimension exceeds the data dimension");
  }
  GeneratorProblem prob;
  prob.real_samples = real_samples;
  prob.prior = prior;
  prob.prior_samples = prior.sample(cfg.n_paths, derive_seed(cfg.seed, 2)).points;
  prob.inner_per_outer = cfg.inner_per_outer;

  Rng net_rng(derive_seed(cfg.seed, 3));
  auto widths = [&cfg](int in, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(out);
    return sizes;
  };
  prob.u = Mlp::create(widths(d, 1), cfg.activation, net_rng);
  prob.t_inner = Mlp::create(widths(d, d), cfg.activation, net_rng);
  prob.t_hat.trunk = Mlp::create(widths(l, d), cfg.activation, net_rng);
  prob.t_hat.skip =
      Mlp::create({l, d}, Activation::linear, net_rng);
  prob.t_hat.skip.weight(0).setZero();
  for (int k = 0; k < l; ++k) prob.t_hat.skip.weight(0)(k, k) = 0.3;
  prob.t_hat.skip.bias(0).setZero();
  return prob;
}

// Per-step trunk shrink rate as a multiple of the outer learning rate.
constexpr double kTrunkDecay = 0.1;

TransportReport train_generator(GeneratorProblem& prob,
                                const GeneratorConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const CostFn cost = builtin_cost("neg_l2sq_d");
  AdamParams hp;
  hp.lr = cfg.eta;
  AdamState u_opt(prob.u, hp), t_opt(prob.t_inner, hp);
  AdamParams outer_hp;
  outer_hp.lr = cfg.outer_eta;
  AdamState trunk_opt(prob.t_hat.trunk, outer_hp);
  AdamState skip_opt(prob.t_hat.skip, outer_hp);
  Rng rng(derive_seed(cfg.seed, 4));

  Eigen::MatrixXd generated = prob.t_hat.forward_batch(prob.prior_samples);

  auto objective_full = [&]() {
    const Eigen::MatrixXd t = prob.t_inner.forward_batch(prob.real_samples);
    return cost.eval_batch(prob.real_samples, t).mean() -
           prob.u.forward_batch(t).col(0).mean() +
           prob.u.forward_batch(generated).col(0).mean();
  };

  TransportReport rep;
  rep.converged = true;
  const auto eval_every = cfg.eval_every > 0 ? cfg.eval_every : cfg.steps;
  const auto per_outer = cfg.inner_per_outer > 0 ? cfg.inner_per_outer : 1000;
  std::int64_t done = 0;
  Mlp::Tape tape, u_tape;
  try {
    for (std::int64_t it = 0; it < cfg.steps;) {
      if (cfg.eta_decay_every > 0) {
        const double f =
            std::pow(0.5, static_cast<double>(it / cfg.eta_decay_every));
        u_opt.params().lr = cfg.eta * f;
        t_opt.params().lr = cfg.eta * f;
        trunk_opt.params().lr = cfg.outer_eta * f;
        skip_opt.params().lr = cfg.outer_eta * f;
      }
      const Eigen::MatrixXd x1 = gather_rows(prob.real_samples, rng, cfg.minibatch);
      const Eigen::MatrixXd x2 = gather_rows(generated, rng, cfg.minibatch);

      // Inf block: u sees -1 on the mapped real batch, +1 on the generated.
      const Eigen::MatrixXd t = prob.t_inner.forward_batch(x1);
      prob.u.forward_batch(t, tape);
      Mlp::Grads g_u = prob.u.backward_batch(
          tape, Eigen::MatrixXd::Constant(t.rows(), 1, -1.0));
      prob.u.forward_batch(x2, tape);
      {
        const Mlp::Grads g2 = prob.u.backward_batch(
            tape, Eigen::MatrixXd::Constant(x2.rows(), 1, 1.0));
        for (std::size_t l = 0; l < g_u.w.size(); ++l) {
          g_u.w[l] += g2.w[l];
          g_u.b[l] += g2.b[l];
        }
      }
      if (!g_u.all_finite()) {
        throw DivergedError("non-finite inner potential gradient", it);
      }
      u_opt.step(prob.u, g_u, StepDirection::descend);

      // Sup block: the inner map climbs grad_y c - grad u.
      const Eigen::MatrixXd t2 = prob.t_inner.forward_batch(x1, tape);
      Eigen::MatrixXd grad_u;
      prob.u.forward_batch(t2, u_tape);
      prob.u.backward_batch(u_tape, Eigen::MatrixXd::Constant(t2.rows(), 1, 1.0),
                            &grad_u);
      const Eigen::MatrixXd upstream = cost.grad_s2_batch(x1, t2) - grad_u;
      const Mlp::Grads g_t = prob.t_inner.backward_batch(tape, upstream);
      if (!g_t.all_finite()) {
        throw DivergedError("non-finite inner map gradient", it);
      }
      t_opt.step(prob.t_inner, g_t, StepDirection::ascend);

      ++it;
      done = it;

      if (it % per_outer == 0) {
        // Outer ascent on the generator: d/dT_hat of E[u(T_hat(Z))].
        const Eigen::MatrixXd z =
            gather_rows(prob.prior_samples, rng, cfg.minibatch);
        Mlp::Tape skip_tape;
        const Eigen::MatrixXd gz =
            prob.t_hat.trunk.forward_batch(z, tape) +
            prob.t_hat.skip.forward_batch(z, skip_tape);
        Eigen::MatrixXd du;
        prob.u.forward_batch(gz, u_tape);
        prob.u.backward_batch(u_tape,
                              Eigen::MatrixXd::Constant(gz.rows(), 1, 1.0), &du);
        const Mlp::Grads g_trunk = prob.t_hat.trunk.backward_batch(tape, du);
        const Mlp::Grads g_skip =
            prob.t_hat.skip.backward_batch(skip_tape, du);
        if (!g_trunk.all_finite() || !g_skip.all_finite()) {
          throw DivergedError("non-finite generator gradient", it);
        }
        trunk_opt.step(prob.t_hat.trunk, g_trunk, StepDirection::ascend);
        skip_opt.step(prob.t_hat.skip, g_skip, StepDirection::ascend);
        const double shrink = 1.0 - trunk_opt.params().lr * kTrunkDecay;
        for (int l = 0; l < prob.t_hat.trunk.n_layers(); ++l) {
          prob.t_hat.trunk.weight(l) *= shrink;
        }
        generated = prob.t_hat.forward_batch(prob.prior_samples);
      }

      if (it % eval_every == 0 || it == cfg.steps) {
        const double j = objective_full();
        if (!std::isfinite(j) || std::fabs(j) > cfg.divergence_threshold) {
          throw DivergedError("objective diverged (value " + std::to_string(j) +
                                  ")",
                              it);
        }
        rep.trace.push_back({it, -j});  // estimated squared distance
      }
    }
  } catch (const DivergedError& ex) {
    rep.converged = false;
    rep.warnings.push_back("diverged at step " + std::to_string(ex.step) + ": " +
                           ex.what());
  }
  rep.steps_run = done;
  if (!rep.trace.empty()) rep.value = rep.trace.back().objective;
  rep.diagnostics["outer_steps"] = std::floor(static_cast<double>(done) /
                                              static_cast<double>(per_outer));
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

SampleSet generate(const Generator& t_hat, const Measure& prior,
                   std::int64_t n, std::uint64_t seed, double shift) {
  if (t_hat.in_dim() != prior.dim()) {
    throw ShapeError("generate: prior dimension does not match the generator");
  }
  SampleSet z = prior.sample(n, seed);
  if (shift != 0.0) {
    z.points = z.points.unaryExpr([shift](double v) {
      return v + shift * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    });
  }
  SampleSet out;
  out.seed = seed;
  out.points = t_hat.forward_batch(z.points);
  return out;
}

AnomalyScorer make_scorer(const Generator& t_hat, const Measure& prior,
                          std::int64_t m, std::uint64_t seed,
                          double lambda_quantile) {
  if (m < 100) {
    throw ParameterError("make_scorer: need at least 100 generated samples");
  }
  if (!(lambda_quantile > 0.0 && lambda_quantile < 1.0)) {
    throw ParameterError("make_scorer: lambda_quantile must lie in (0,1)");
  }
  AnomalyScorer sc;
  sc.samples = generate(t_hat, prior, m, derive_seed(seed, 1)).points;
  const int d = static_cast<int>(sc.samples.cols());
  sc.bandwidth.resize(d);
  const double factor =
      std::pow(4.0 / ((d + 2.0) * static_cast<double>(m)), 1.0 / (d + 4.0));
  for (int k = 0; k < d; ++k) {
    const double mean = sc.samples.col(k).mean();
    const double var =
        (sc.samples.col(k).array() - mean).square().sum() / (m - 1.0);
    const double sd = std::sqrt(std::max(var, 1e-300));
    sc.bandwidth[k] = sd * factor;
  }
  std::vector<double> dens(m);
  for (std::int64_t i = 0; i < m; ++i) {
    dens[i] = density_estimate(sc, sc.samples.row(i).transpose());
  }
  std::sort(dens.begin(), dens.end());
  const auto idx = static_cast<std::size_t>(
      lambda_quantile * static_cast<double>(m - 1));
  sc.lambda = dens[idx];
  return sc;
}

double density_estimate(const AnomalyScorer& scorer, const Eigen::VectorXd& x) {
  const auto m = scorer.samples.rows();
  const int d = static_cast<int>(scorer.samples.cols());
  if (x.size() != d) {
    throw ShapeError("density_estimate: query dimension mismatch");
  }
  const double norm = std::pow(2.0 * M_PI, -0.5 * d) /
                      scorer.bandwidth.prod();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double e = 0.0;
    for (int k = 0; k < d; ++k) {
      const double z = (x[k] - scorer.samples(i, k)) / scorer.bandwidth[k];
      e += z * z;
    }
    acc += std::exp(-0.5 * e);
  }
  return norm * acc / static_cast<double>(m);
}

std::vector<AnomalyScore> score_anomalies(const AnomalyScorer& scorer,
                                          const Eigen::MatrixXd& xs) {
  std::vector<AnomalyScore> out;
  out.reserve(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    AnomalyScore s;
    s.x = xs.row(i).transpose();
    s.density = density_estimate(scorer, s.x);
    s.is_anomaly = s.density <= scorer.lambda;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pdot
