#include "pdot/neural_dual.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "pdot/errors.hpp"
#include "pdot/rng.hpp"

namespace pdot {

namespace {

constexpr double kExpClamp = 30.0;

struct Batch {
  Eigen::MatrixXd x1, x2;
};

Batch draw_batch(const NeuralDualProblem& prob, Rng& rng, int b) {
  Batch bd;
  bd.x1.resize(b, prob.s1.cols());
  bd.x2.resize(b, prob.s2.cols());
  for (int r = 0; r < b; ++r) {
    bd.x1.row(r) = prob.s1.row(rng.index(prob.s1.rows()));
    bd.x2.row(r) = prob.s2.row(rng.index(prob.s2.rows()));
  }
  return bd;
}

// Residual r = c - u1(x1) - u2(x2) - h(x1).(x2 - x1) per row.
Eigen::ArrayXd residuals(const NeuralDualProblem& prob, const Eigen::MatrixXd& x1,
                         const Eigen::MatrixXd& x2) {
  Eigen::ArrayXd r = prob.cost.eval_batch(x1, x2).array() -
                     prob.u1.forward_batch(x1).col(0).array() -
                     prob.u2.forward_batch(x2).col(0).array();
  if (prob.mode == SaddleMode::mot) {
    const Eigen::MatrixXd h_out = prob.h.forward_batch(x1);
    r -= (h_out.array() * (x2 - x1).array()).rowwise().sum();
  }
  return r;
}

double anneal_eps(const NeuralDualConfig& cfg, double eps, std::int64_t step) {
  if (cfg.eps_start <= eps) return eps;
  const double horizon = cfg.anneal_frac * static_cast<double>(cfg.steps);
  if (horizon <= 0.0) return eps;
  const double frac = std::min(1.0, static_cast<double>(step) / horizon);
  return cfg.eps_start * std::pow(eps / cfg.eps_start, frac);
}

struct Optims {
  AdamState u1, u2, h;
};

Optims make_optims(const NeuralDualProblem& prob, const NeuralDualConfig& cfg) {
  AdamParams hp;
  hp.lr = cfg.eta;
  Optims o{AdamState(prob.u1, hp), AdamState(prob.u2, hp),
           prob.mode == SaddleMode::mot ? AdamState(prob.h, hp)
                                        : AdamState(prob.u1, hp)};
  return o;
}

double grads_squared_norm(const Mlp::Grads& g) {
  double s = 0.0;
  for (const auto& m : g.w) s += m.squaredNorm();
  for (const auto& v : g.b) s += v.squaredNorm();
  return s;
}

void scale_grads(Mlp::Grads& g, double s) {
  for (auto& m : g.w) m *= s;
  for (auto& v : g.b) v *= s;
}

void descend_all(NeuralDualProblem& prob, Optims& opt, const Batch& bd,
                 const Eigen::ArrayXd& up1, const Eigen::ArrayXd& up2,
                 const Eigen::ArrayXd& scale_h, double grad_clip,
                 std::int64_t step) {
  Mlp::Tape tape;
  prob.u1.forward_batch(bd.x1, tape);
  auto g1 = prob.u1.backward_batch(tape, up1.matrix());
  prob.u2.forward_batch(bd.x2, tape);
  auto g2 = prob.u2.backward_batch(tape, up2.matrix());
  Mlp::Grads gh;
  if (prob.mode == SaddleMode::mot) {
    prob.h.forward_batch(bd.x1, tape);
    const Eigen::MatrixXd up_h =
        ((bd.x2 - bd.x1).array().colwise() * scale_h).matrix();
    gh = prob.h.backward_batch(tape, up_h);
  }
  if (!g1.all_finite() || !g2.all_finite() ||
      (prob.mode == SaddleMode::mot && !gh.all_finite())) {
    throw DivergedError("non-finite gradient", step);
  }
  if (grad_clip > 0.0) {
    double sq = grads_squared_norm(g1) + grads_squared_norm(g2);
    if (prob.mode == SaddleMode::mot) sq += grads_squared_norm(gh);
    if (sq > grad_clip * grad_clip) {
      const double s = grad_clip / std::sqrt(sq);
      scale_grads(g1, s);
      scale_grads(g2, s);
      if (prob.mode == SaddleMode::mot) scale_grads(gh, s);
    }
  }
  opt.u1.step(prob.u1, g1, StepDirection::descend);
  opt.u2.step(prob.u2, g2, StepDirection::descend);
  if (prob.mode == SaddleMode::mot) opt.h.step(prob.h, gh, StepDirection::descend);
}

// Primal estimate E^pi[c] over the full sample pair grid, after one exact
// Sinkhorn polish (row then column log-mean-exp update) of the learned
// potentials. The polish projects the implied coupling onto the marginal
// constraints; a raw importance-weighted average instead inherits an upward
// tilt from small potential errors, which sharpens as eps shrinks.
double primal_estimate(const NeuralDualProblem& prob, double eps,
                       double* pairs_used) {
  const Eigen::VectorXd v2 = prob.u2.forward_batch(prob.s2).col(0);
  Eigen::MatrixXd h_out;
  if (prob.mode == SaddleMode::mot) h_out = prob.h.forward_batch(prob.s1);
  const auto n1 = prob.s1.rows(), n2 = prob.s2.rows();

  // cost row c(s1_i, .) and its h-shifted version over the second cloud
  auto cost_row = [&](Eigen::Index i, Eigen::VectorXd& c,
                      Eigen::VectorXd& cs) {
    const Eigen::MatrixXd x1rep = prob.s1.row(i).replicate(n2, 1);
    c = prob.cost.eval_batch(x1rep, prob.s2);
    cs = c;
    if (prob.mode == SaddleMode::mot) {
      cs -= (prob.s2.rowwise() - prob.s1.row(i)).matrix() *
            h_out.row(i).transpose();
    }
  };

  Eigen::VectorXd c, cs;
  Eigen::VectorXd u1p(n1);
  Eigen::ArrayXd colmax = Eigen::ArrayXd::Constant(
      n2, -std::numeric_limits<double>::infinity());
  Eigen::ArrayXd colsum = Eigen::ArrayXd::Zero(n2);
  for (Eigen::Index i = 0; i < n1; ++i) {
    cost_row(i, c, cs);
    const Eigen::ArrayXd a = (cs - v2).array() / eps;
    const double m = a.maxCoeff();
    u1p[i] = eps * (m + std::log((a - m).exp().mean()));
    // running column log-sum-exp of (cs_ij - u1p_i)/eps
    const Eigen::ArrayXd x = cs.array() / eps - u1p[i] / eps;
    const Eigen::ArrayXd newmax = colmax.max(x);
    colsum = colsum * (colmax - newmax).exp() + (x - newmax).exp();
    colmax = newmax;
  }
  const Eigen::ArrayXd u2p =
      eps * (colmax + (colsum / static_cast<double>(n1)).log());

  double wsum = 0.0, wcsum = 0.0;
  for (Eigen::Index i = 0; i < n1; ++i) {
    cost_row(i, c, cs);
    const Eigen::ArrayXd x =
        ((cs.array() - u2p) / eps - u1p[i] / eps).min(kExpClamp);
    const Eigen::ArrayXd w = x.exp();
    wsum += w.sum();
    wcsum += (w * c.array()).sum();
  }
  if (pairs_used) *pairs_used = static_cast<double>(n1) * n2;
  if (wsum <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return wcsum / wsum;
}

}  // namespace

NeuralDualProblem make_neural_dual_problem(const Measure& mu1,
                                           const Measure& mu2,
                                           const CostFn& cost, SaddleMode mode,
                                           const NeuralDualConfig& cfg) {
  if (mu1.dim() != mu2.dim()) {
    throw ShapeError("make_neural_dual_problem: marginal dimensions differ");
  }
  if (mode == SaddleMode::mot && mu1.dim() != 1) {
    throw UnsupportedError("make_neural_dual_problem: mot mode requires dim == 1");
  }
  NeuralDualProblem prob;
  prob.mode = mode;
  prob.cost = cost;
  prob.mu1 = mu1;
  prob.mu2 = mu2;
  prob.s1 = mu1.sample(cfg.n_paths, derive_seed(cfg.seed, 1)).points;
  prob.s2 = mu2.sample(cfg.n_paths, derive_seed(cfg.seed, 2)).points;
  const int d = mu1.dim();
  Rng net_rng(derive_seed(cfg.seed, 3));
  auto widths = [d, &cfg](int out) {
    std::vector<int> sizes{d};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(out);
    return sizes;
  };
  prob.u1 = Mlp::create(widths(1), cfg.activation, net_rng);
  prob.u2 = Mlp::create(widths(1), cfg.activation, net_rng);
  if (mode == SaddleMode::mot) {
    prob.h = Mlp::create(widths(d), cfg.activation, net_rng);
  }
  return prob;
}

TransportReport neural_entropic(NeuralDualProblem& prob, double eps,
                                const NeuralDualConfig& cfg) {
  if (eps <= 0.0) throw ParameterError("neural_entropic: eps must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  Optims opt = make_optims(prob, cfg);
  Rng rng(derive_seed(cfg.seed, 4));
  TransportReport rep;
  rep.converged = true;
  double clip_count = 0.0;

  auto full_objective = [&](double e) {
    const Eigen::ArrayXd r = residuals(prob, prob.s1, prob.s2) / e;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      acc += std::exp(std::min(r[k], kExpClamp));
    }
    return prob.u1.forward_batch(prob.s1).col(0).mean() +
           prob.u2.forward_batch(prob.s2).col(0).mean() +
           e * acc / static_cast<double>(r.size());
  };

  const auto eval_every = cfg.eval_every > 0 ? cfg.eval_every : cfg.steps;
  std::int64_t done = 0;
  try {
    for (std::int64_t it = 0; it < cfg.steps;) {
      const double e = anneal_eps(cfg, eps, it);
      const Batch bd = draw_batch(prob, rng, cfg.minibatch);
      const Eigen::ArrayXd r = residuals(prob, bd.x1, bd.x2);
      Eigen::ArrayXd w(r.size());
      for (Eigen::Index k = 0; k < r.size(); ++k) {
        const double x = r[k] / e;
        if (x > kExpClamp) {
          w[k] = 0.0;  // clamped: the exponential's gradient is cut
          clip_count += 1.0;
        } else {
          w[k] = std::exp(x);
        }
      }
      descend_all(prob, opt, bd, 1.0 - w, 1.0 - w, -w, cfg.grad_clip, it);
      ++it;
      done = it;
      if (it % eval_every == 0 || it == cfg.steps) {
        const double j = full_objective(e);
        if (!std::isfinite(j) || std::fabs(j) > cfg.divergence_threshold) {
          throw DivergedError("objective diverged (value " + std::to_string(j) +
                                  ")",
                              it);
        }
        rep.trace.push_back({it, j});
      }
    }
  } catch (const DivergedError& ex) {
    rep.converged = false;
    rep.warnings.push_back("diverged at step " + std::to_string(ex.step) + ": " +
                           ex.what());
  }
  rep.steps_run = done;
  rep.diagnostics["clip_count"] = clip_count;
  if (rep.converged) {
    double pairs = 0.0;
    rep.value = primal_estimate(prob, eps, &pairs);
    rep.diagnostics["primal_pairs"] = pairs;
    rep.diagnostics["dual_final"] =
        rep.trace.empty() ? 0.0 : rep.trace.back().objective;
  } else if (!rep.trace.empty()) {
    rep.value = rep.trace.back().objective;
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

TransportReport penalization(NeuralDualProblem& prob, double gamma,
                             const NeuralDualConfig& cfg) {
  if (gamma < 0.0) {
    throw ParameterError("penalization: gamma must be nonnegative");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Optims opt = make_optims(prob, cfg);
  Rng rng(derive_seed(cfg.seed, 4));
  TransportReport rep;
  rep.converged = true;

  auto full_objective = [&]() {
    const Eigen::ArrayXd r = residuals(prob, prob.s1, prob.s2);
    return prob.u1.forward_batch(prob.s1).col(0).mean() +
           prob.u2.forward_batch(prob.s2).col(0).mean() +
           gamma * r.max(0.0).square().mean();
  };

  const auto eval_every = cfg.eval_every > 0 ? cfg.eval_every : cfg.steps;
  std::int64_t done = 0;
  try {
    for (std::int64_t it = 0; it < cfg.steps;) {
      const Batch bd = draw_batch(prob, rng, cfg.minibatch);
      const Eigen::ArrayXd pos = residuals(prob, bd.x1, bd.x2).max(0.0);
      descend_all(prob, opt, bd, 1.0 - 2.0 * gamma * pos,
                  1.0 - 2.0 * gamma * pos, -2.0 * gamma * pos, cfg.grad_clip,
                  it);
      ++it;
      done = it;
      if (it % eval_every == 0 || it == cfg.steps) {
        const double j = full_objective();
        if (!std::isfinite(j) || std::fabs(j) > cfg.divergence_threshold) {
          throw DivergedError("objective diverged (value " + std::to_string(j) +
                                  ")",
                              it);
        }
        rep.trace.push_back({it, j});
      }
    }
  } catch (const DivergedError& ex) {
    rep.converged = false;
    rep.warnings.push_back("diverged at step " + std::to_string(ex.step) + ": " +
                           ex.what());
  }
  rep.steps_run = done;
  const std::size_t tail = std::min<std::size_t>(5, rep.trace.size());
  if (tail > 0) {
    double m = 0.0;
    for (std::size_t i = rep.trace.size() - tail; i < rep.trace.size(); ++i) {
      m += rep.trace[i].objective;
    }
    rep.value = m / static_cast<double>(tail);
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace pdot
