#include "pdot/saddle.hpp"

#include <chrono>
#include <cmath>

#include "pdot/errors.hpp"

namespace pdot {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x,
                            const std::vector<std::int64_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = x.row(idx[r]);
  return out;
}

void add_grads(Mlp::Grads& a, const Mlp::Grads& b) {
  for (std::size_t l = 0; l < a.w.size(); ++l) {
    a.w[l] += b.w[l];
    a.b[l] += b.b[l];
  }
}

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
  return 1.0 / (1.0 + (-x).exp());
}

struct BatchData {
  Eigen::MatrixXd x1, x2;
};

// Mixture weights q_1..q_n for a batch: the first n-1 from the logit nets
// through a sigmoid, the last one minus their sum.
std::vector<Eigen::ArrayXd> mixture_weights(const std::vector<Mlp>& q,
                                            const Eigen::MatrixXd& x1,
                                            int n_maps) {
  std::vector<Eigen::ArrayXd> qs(n_maps);
  Eigen::ArrayXd rest = Eigen::ArrayXd::Ones(x1.rows());
  for (int k = 0; k + 1 < n_maps; ++k) {
    qs[k] = sigmoid(q[k].forward_batch(x1).col(0).array());
    rest -= qs[k];
  }
  qs[n_maps - 1] = rest;
  return qs;
}

struct ThetaGrads {
  Mlp::Grads u, h;
};

struct OmegaGrads {
  std::vector<Mlp::Grads> maps, q;
};

// Gradients of the batch objective for the inf block {u} (ot) or {u, h}
// (mot), at the given networks.
ThetaGrads theta_grads(const SaddleProblem& prob, const Mlp& u, const Mlp& h,
                       const std::vector<Mlp>& maps, const std::vector<Mlp>& q,
                       const BatchData& bd) {
  const Eigen::Index b = bd.x1.rows();
  ThetaGrads g;
  Mlp::Tape tape;
  if (prob.mode == SaddleMode::ot) {
    const Eigen::MatrixXd t = maps[0].forward_batch(bd.x1);
    u.forward_batch(t, tape);
    g.u = u.backward_batch(tape, Eigen::MatrixXd::Constant(b, 1, -1.0));
    u.forward_batch(bd.x2, tape);
    add_grads(g.u, u.backward_batch(tape, Eigen::MatrixXd::Constant(b, 1, 1.0)));
    return g;
  }
  const int n_maps = static_cast<int>(maps.size());
  const auto qs = mixture_weights(q, bd.x1, n_maps);
  Eigen::MatrixXd h_upstream = Eigen::MatrixXd::Zero(b, bd.x1.cols());
  bool first = true;
  for (int k = 0; k < n_maps; ++k) {
    const Eigen::MatrixXd t = maps[k].forward_batch(bd.x1);
    u.forward_batch(t, tape);
    Eigen::MatrixXd up = (-qs[k]).matrix();
    if (first) {
      g.u = u.backward_batch(tape, up);
      first = false;
    } else {
      add_grads(g.u, u.backward_batch(tape, up));
    }
    h_upstream -= ((t - bd.x1).array().colwise() * qs[k]).matrix();
  }
  u.forward_batch(bd.x2, tape);
  add_grads(g.u, u.backward_batch(tape, Eigen::MatrixXd::Constant(b, 1, 1.0)));
  h.forward_batch(bd.x1, tape);
  g.h = h.backward_batch(tape, h_upstream);
  return g;
}

// Gradients for the sup block {maps} (ot) or {maps, q} (mot).
OmegaGrads omega_grads(const SaddleProblem& prob, const Mlp& u, const Mlp& h,
                       const std::vector<Mlp>& maps, const std::vector<Mlp>& q,
                       const BatchData& bd) {
  OmegaGrads g;
  Mlp::Tape tape, u_tape;
  if (prob.mode == SaddleMode::ot) {
    const Eigen::MatrixXd t = maps[0].forward_batch(bd.x1, tape);
    Eigen::MatrixXd grad_u;
    u.forward_batch(t, u_tape);
    u.backward_batch(u_tape, Eigen::MatrixXd::Constant(t.rows(), 1, 1.0), &grad_u);
    const Eigen::MatrixXd upstream = prob.cost.grad_s2_batch(bd.x1, t) - grad_u;
    g.maps.push_back(maps[0].backward_batch(tape, upstream));
    return g;
  }
  const int n_maps = static_cast<int>(maps.size());
  const auto qs = mixture_weights(q, bd.x1, n_maps);
  const Eigen::MatrixXd h_out = h.forward_batch(bd.x1);
  std::vector<Eigen::ArrayXd> a(n_maps);  // per-map bracket values
  for (int k = 0; k < n_maps; ++k) {
    const Eigen::MatrixXd t = maps[k].forward_batch(bd.x1, tape);
    Eigen::MatrixXd grad_u;
    u.forward_batch(t, u_tape);
    u.backward_batch(u_tape, Eigen::MatrixXd::Constant(t.rows(), 1, 1.0), &grad_u);
    Eigen::MatrixXd upstream =
        ((prob.cost.grad_s2_batch(bd.x1, t) - grad_u - h_out).array().colwise() *
         qs[k])
            .matrix();
    g.maps.push_back(maps[k].backward_batch(tape, upstream));
    a[k] = prob.cost.eval_batch(bd.x1, t).array() -
           u.forward_batch(t).col(0).array() -
           ((t - bd.x1).array() * h_out.array()).rowwise().sum();
  }
  for (int m = 0; m + 1 < n_maps; ++m) {
    Mlp::Tape q_tape;
    const Eigen::ArrayXd raw = q[m].forward_batch(bd.x1, q_tape).col(0).array();
    const Eigen::ArrayXd qm = sigmoid(raw);
    const Eigen::MatrixXd upstream =
        ((a[m] - a[n_maps - 1]) * qm * (1.0 - qm)).matrix();
    g.q.push_back(q[m].backward_batch(q_tape, upstream));
  }
  return g;
}

bool theta_finite(const ThetaGrads& g, bool mot) {
  return g.u.all_finite() && (!mot || g.h.all_finite());
}

bool omega_finite(const OmegaGrads& g) {
  for (const auto& m : g.maps) {
    if (!m.all_finite()) return false;
  }
  for (const auto& m : g.q) {
    if (!m.all_finite()) return false;
  }
  return true;
}

BatchData draw_batch(SaddleState& state, const SaddleProblem& prob) {
  const auto n = prob.s1.rows();
  std::vector<std::int64_t> idx(state.minibatch);
  for (auto& i : idx) i = state.rng.index(n);
  return {gather_rows(prob.s1, idx), gather_rows(prob.s2, idx)};
}

void set_learning_rates(SaddleState& state) {
  const double eta = state.eta_at(state.step);
  state.u_opt.params().lr = eta;
  for (auto& o : state.map_opt) o.params().lr = eta;
  state.h_opt.params().lr = eta;
  for (auto& o : state.q_opt) o.params().lr = eta * state.q_lr_scale;
}

double objective_on(const SaddleProblem& prob, const BatchData& bd) {
  const Eigen::Index b = bd.x1.rows();
  if (prob.mode == SaddleMode::ot) {
    const Eigen::MatrixXd t = prob.maps[0].forward_batch(bd.x1);
    const double c = prob.cost.eval_batch(bd.x1, t).mean();
    const double ut = prob.u.forward_batch(t).col(0).mean();
    const double ux2 = prob.u.forward_batch(bd.x2).col(0).mean();
    return c - ut + ux2;
  }
  const int n_maps = static_cast<int>(prob.maps.size());
  const auto qs = mixture_weights(prob.q, bd.x1, n_maps);
  const Eigen::MatrixXd h_out = prob.h.forward_batch(bd.x1);
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(b);
  for (int k = 0; k < n_maps; ++k) {
    const Eigen::MatrixXd t = prob.maps[k].forward_batch(bd.x1);
    const Eigen::ArrayXd a = prob.cost.eval_batch(bd.x1, t).array() -
                             prob.u.forward_batch(t).col(0).array() -
                             ((t - bd.x1).array() * h_out.array()).rowwise().sum();
    acc += qs[k] * a;
  }
  acc += prob.u.forward_batch(bd.x2).col(0).array();
  return acc.mean();
}

}  // namespace

double SaddleState::eta_at(std::int64_t step) const {
  if (eta_decay_every <= 0) return eta0;
  const auto k = step / eta_decay_every;
  return eta0 * std::pow(0.5, static_cast<double>(k));
}

SaddleProblem make_saddle_problem(const Measure& mu1, const Measure& mu2,
                                  const CostFn& cost, const SaddleConfig& cfg) {
  if (mu1.dim() != mu2.dim()) {
    throw ShapeError("make_saddle_problem: marginal dimensions differ");
  }
  if (cfg.mode == SaddleMode::mot && mu1.dim() != 1) {
    throw UnsupportedError("make_saddle_problem: mot mode requires dim == 1");
  }
  if (cfg.n_maps < 2 && cfg.mode == SaddleMode::mot) {
    throw ParameterError("make_saddle_problem: mot needs n_maps >= 2");
  }
  SaddleProblem prob;
  prob.mode = cfg.mode;
  prob.mu1 = mu1;
  prob.mu2 = mu2;
  prob.s1 = mu1.sample(cfg.n_paths, derive_seed(cfg.seed, 1)).points;
  prob.s2 = mu2.sample(cfg.n_paths, derive_seed(cfg.seed, 2)).points;

  if (cfg.shift_cost && cost.has_shift() && !cost.is_shifted()) {
    const double s1_max = prob.s1.maxCoeff();
    prob.cost = shifted_cost(cost, s1_max);
    prob.value_correction = shift_mean(prob.cost, prob.s2);
  } else {
    prob.cost = cost;
    prob.value_correction = 0.0;
    if (!cost.concave_in_s2()) {
      prob.warnings.push_back(
          "cost \"" + cost.name() +
          "\" is not concave in s2 and runs unshifted; the sup may diverge");
    }
  }

  if (cfg.mode == SaddleMode::mot) {
    const auto strikes = default_strike_grid(mu1, mu2, 21);
    const auto rep = check_convex_order(mu1, mu2, strikes, cfg.n_paths,
                                        derive_seed(cfg.seed, 5));
    if (!rep.ok) {
      prob.warnings.push_back(
          "convex-order check failed (worst call-price violation " +
          std::to_string(rep.worst_violation) + " at strike " +
          std::to_string(rep.worst_strike) + ", mean gap " +
          std::to_string(rep.mean_gap) + "); the martingale problem may be infeasible");
    }
  }

  const int d = mu1.dim();
  Rng net_rng(derive_seed(cfg.seed, 3));
  auto widths = [d](const std::vector<int>& hidden, int out) {
    std::vector<int> sizes;
    sizes.push_back(d);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
  };
  prob.u = Mlp::create(widths(cfg.u_hidden, 1), cfg.activation, net_rng);
  const int n_maps = cfg.mode == SaddleMode::mot ? cfg.n_maps : 1;
  for (int k = 0; k < n_maps; ++k) {
    prob.maps.push_back(Mlp::create(widths(cfg.map_hidden, d), cfg.activation, net_rng));
  }
  if (cfg.mode == SaddleMode::mot) {
    prob.h = Mlp::create(widths(cfg.u_hidden, d), cfg.activation, net_rng);
    for (int k = 0; k + 1 < n_maps; ++k) {
      prob.q.push_back(Mlp::create(widths(cfg.map_hidden, 1), cfg.activation, net_rng));
    }
  }
  return prob;
}

SaddleState make_saddle_state(const SaddleProblem& prob, const SaddleConfig& cfg) {
  SaddleState st;
  AdamParams hp;
  hp.lr = cfg.eta;
  st.u_opt = AdamState(prob.u, hp);
  for (const auto& m : prob.maps) st.map_opt.emplace_back(m, hp);
  if (prob.mode == SaddleMode::mot) {
    st.h_opt = AdamState(prob.h, hp);
    AdamParams qp = hp;
    qp.lr = cfg.eta * cfg.q_lr_scale;
    for (const auto& m : prob.q) st.q_opt.emplace_back(m, qp);
  }
  st.minibatch = cfg.minibatch;
  st.predictor_corrector = cfg.predictor_corrector;
  st.eta0 = cfg.eta;
  st.eta_decay_every = cfg.eta_decay_every;
  st.q_lr_scale = cfg.q_lr_scale;
  st.divergence_threshold = cfg.divergence_threshold;
  st.rng = Rng(derive_seed(cfg.seed, 4));
  return st;
}

double objective_ot(const SaddleProblem& prob,
                    const std::vector<std::int64_t>& batch) {
  if (prob.mode != SaddleMode::ot) {
    throw UnsupportedError("objective_ot: problem is not in ot mode");
  }
  return objective_on(prob, {gather_rows(prob.s1, batch), gather_rows(prob.s2, batch)});
}

double objective_mot(const SaddleProblem& prob,
                     const std::vector<std::int64_t>& batch) {
  if (prob.mode != SaddleMode::mot) {
    throw UnsupportedError("objective_mot: problem is not in mot mode");
  }
  return objective_on(prob, {gather_rows(prob.s1, batch), gather_rows(prob.s2, batch)});
}

double objective_full(const SaddleProblem& prob) {
  return objective_on(prob, {prob.s1, prob.s2});
}

void ah_step(SaddleState& state, SaddleProblem& prob) {
  const bool mot = prob.mode == SaddleMode::mot;
  set_learning_rates(state);
  const BatchData bd = draw_batch(state, prob);

  ThetaGrads tg = theta_grads(prob, prob.u, prob.h, prob.maps, prob.q, bd);
  if (!theta_finite(tg, mot)) {
    throw DivergedError("non-finite inf-block gradient", state.step);
  }
  state.u_opt.step(prob.u, tg.u, StepDirection::descend);
  if (mot) state.h_opt.step(prob.h, tg.h, StepDirection::descend);

  OmegaGrads og = omega_grads(prob, prob.u, prob.h, prob.maps, prob.q, bd);
  if (!omega_finite(og)) {
    throw DivergedError("non-finite sup-block gradient", state.step);
  }
  for (std::size_t k = 0; k < prob.maps.size(); ++k) {
    state.map_opt[k].step(prob.maps[k], og.maps[k], StepDirection::ascend);
  }
  for (std::size_t k = 0; k < prob.q.size(); ++k) {
    state.q_opt[k].step(prob.q[k], og.q[k], StepDirection::ascend);
  }
  ++state.step;
}

void ah_step_predictor_corrector(SaddleState& state, SaddleProblem& prob) {
  const bool mot = prob.mode == SaddleMode::mot;
  set_learning_rates(state);
  const BatchData bd = draw_batch(state, prob);

  ThetaGrads tg = theta_grads(prob, prob.u, prob.h, prob.maps, prob.q, bd);
  if (!theta_finite(tg, mot)) {
    throw DivergedError("non-finite inf-block gradient", state.step);
  }
  Mlp u_half = prob.u, h_half = prob.h;
  state.u_opt.preview(prob.u, tg.u, StepDirection::descend, u_half);
  if (mot) state.h_opt.preview(prob.h, tg.h, StepDirection::descend, h_half);
  tg = theta_grads(prob, u_half, h_half, prob.maps, prob.q, bd);
  if (!theta_finite(tg, mot)) {
    throw DivergedError("non-finite inf-block gradient", state.step);
  }
  state.u_opt.step(prob.u, tg.u, StepDirection::descend);
  if (mot) state.h_opt.step(prob.h, tg.h, StepDirection::descend);

  OmegaGrads og = omega_grads(prob, prob.u, prob.h, prob.maps, prob.q, bd);
  if (!omega_finite(og)) {
    throw DivergedError("non-finite sup-block gradient", state.step);
  }
  std::vector<Mlp> maps_half = prob.maps, q_half = prob.q;
  for (std::size_t k = 0; k < prob.maps.size(); ++k) {
    state.map_opt[k].preview(prob.maps[k], og.maps[k], StepDirection::ascend,
                             maps_half[k]);
  }
  for (std::size_t k = 0; k < prob.q.size(); ++k) {
    state.q_opt[k].preview(prob.q[k], og.q[k], StepDirection::ascend, q_half[k]);
  }
  og = omega_grads(prob, prob.u, prob.h, maps_half, q_half, bd);
  if (!omega_finite(og)) {
    throw DivergedError("non-finite sup-block gradient", state.step);
  }
  for (std::size_t k = 0; k < prob.maps.size(); ++k) {
    state.map_opt[k].step(prob.maps[k], og.maps[k], StepDirection::ascend);
  }
  for (std::size_t k = 0; k < prob.q.size(); ++k) {
    state.q_opt[k].step(prob.q[k], og.q[k], StepDirection::ascend);
  }
  ++state.step;
}

namespace {

// Quantile-grid dump of the learned maps; also fills the mot diagnostics.
void fill_map_samples(const SaddleProblem& prob, TransportReport& rep) {
  if (prob.dim() != 1) return;
  const int n_grid = 200;
  const int n_maps = static_cast<int>(prob.maps.size());
  Eigen::MatrixXd grid(n_grid, 1);
  for (int i = 0; i < n_grid; ++i) {
    grid(i, 0) = prob.mu1.quantile((i + 0.5) / n_grid);
  }
  if (prob.mode == SaddleMode::ot) {
    rep.map_header = {"s1", "T"};
    rep.map_samples.resize(n_grid, 2);
    rep.map_samples.col(0) = grid.col(0);
    rep.map_samples.col(1) = prob.maps[0].forward_batch(grid).col(0);
    return;
  }
  const auto qs = mixture_weights(prob.q, grid, n_maps);
  std::vector<Eigen::VectorXd> ts(n_maps);
  for (int k = 0; k < n_maps; ++k) {
    ts[k] = prob.maps[k].forward_batch(grid).col(0);
  }
  // Columns: s1, the mixture-mean map, each map, each weight.
  rep.map_header = {"s1", "T"};
  for (int k = 0; k < n_maps; ++k) {
    rep.map_header.push_back(n_maps == 2 ? (k == 0 ? "Tu" : "Td")
                                         : "T" + std::to_string(k + 1));
  }
  for (int k = 0; k < n_maps; ++k) {
    if (n_maps == 2 && k == 1) break;  // q2 = 1 - q implied
    rep.map_header.push_back(n_maps == 2 ? "q" : "q" + std::to_string(k + 1));
  }
  rep.map_samples.resize(n_grid, static_cast<int>(rep.map_header.size()));
  rep.map_samples.col(0) = grid.col(0);
  Eigen::ArrayXd mixture = Eigen::ArrayXd::Zero(n_grid);
  for (int k = 0; k < n_maps; ++k) mixture += qs[k] * ts[k].array();
  rep.map_samples.col(1) = mixture.matrix();
  for (int k = 0; k < n_maps; ++k) rep.map_samples.col(2 + k) = ts[k];
  const int q_cols = n_maps == 2 ? 1 : n_maps - 1;
  for (int k = 0; k < q_cols; ++k) {
    rep.map_samples.col(2 + n_maps + k) = qs[k].matrix();
  }

  // Order diagnostic: fraction of the grid with Td <= s1 <= Tu.
  if (n_maps == 2) {
    double ordered = 0.0;
    for (int i = 0; i < n_grid; ++i) {
      if (ts[1][i] <= grid(i, 0) && grid(i, 0) <= ts[0][i]) ordered += 1.0;
    }
    rep.diagnostics["order_fraction"] = ordered / n_grid;
  }
  double q_min = 1.0, q_max = 0.0;
  for (int k = 0; k < n_maps; ++k) {
    q_min = std::min(q_min, qs[k].minCoeff());
    q_max = std::max(q_max, qs[k].maxCoeff());
  }
  rep.diagnostics["q_min"] = q_min;
  rep.diagnostics["q_max"] = q_max;
}

void fill_mot_diagnostics(const SaddleProblem& prob, TransportReport& rep) {
  if (prob.mode != SaddleMode::mot) return;
  const int n_maps = static_cast<int>(prob.maps.size());
  const auto qs = mixture_weights(prob.q, prob.s1, n_maps);
  Eigen::ArrayXd drift = Eigen::ArrayXd::Zero(prob.s1.rows());
  for (int k = 0; k < n_maps; ++k) {
    const Eigen::MatrixXd t = prob.maps[k].forward_batch(prob.s1);
    drift += qs[k] * (t - prob.s1).col(0).array();
  }
  rep.diagnostics["martingale_residual"] = drift.abs().mean();
}

}  // namespace

TransportReport solve(SaddleProblem& prob, const SaddleConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SaddleState state = make_saddle_state(prob, cfg);
  TransportReport rep;
  rep.warnings = prob.warnings;
  rep.converged = true;

  const auto eval_every = cfg.eval_every > 0 ? cfg.eval_every : cfg.steps;
  try {
    for (std::int64_t it = 0; it < cfg.steps;) {
      if (cfg.predictor_corrector) {
        ah_step_predictor_corrector(state, prob);
      } else {
        ah_step(state, prob);
      }
      it = state.step;
      if (it % eval_every == 0 || it == cfg.steps) {
        const double j = objective_full(prob);
        if (!std::isfinite(j) || std::fabs(j) > state.divergence_threshold) {
          throw DivergedError("objective diverged (value " + std::to_string(j) + ")",
                              it);
        }
        state.trace.push_back({it, j});
      }
    }
  } catch (const DivergedError& e) {
    rep.converged = false;
    rep.warnings.push_back("diverged at step " + std::to_string(e.step) + ": " +
                           e.what());
  }

  rep.trace = state.trace;
  rep.steps_run = state.step;
  const std::size_t tail = std::min<std::size_t>(5, rep.trace.size());
  double mean_tail = 0.0;
  for (std::size_t i = rep.trace.size() - tail; i < rep.trace.size(); ++i) {
    mean_tail += rep.trace[i].objective;
  }
  if (tail > 0) mean_tail /= static_cast<double>(tail);
  rep.value = mean_tail + prob.value_correction;

  if (rep.trace.size() >= 2) {
    const std::size_t last10 = std::min<std::size_t>(10, rep.trace.size());
    double m = 0.0, s = 0.0;
    for (std::size_t i = rep.trace.size() - last10; i < rep.trace.size(); ++i) {
      m += rep.trace[i].objective;
    }
    m /= static_cast<double>(last10);
    for (std::size_t i = rep.trace.size() - last10; i < rep.trace.size(); ++i) {
      const double dlt = rep.trace[i].objective - m;
      s += dlt * dlt;
    }
    rep.diagnostics["trace_last10_var"] = s / static_cast<double>(last10 - 1);
  }
  rep.diagnostics["value_correction"] = prob.value_correction;
  rep.diagnostics["final_eta"] = state.eta_at(state.step);
  if (rep.converged) {
    fill_map_samples(prob, rep);
    fill_mot_diagnostics(prob, rep);
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

double map_error_vs_frechet_hoeffding(const TransportReport& report,
                                      const Measure& /*mu1*/, const Measure& mu2) {
  if (report.map_header.size() < 2 || report.map_header[1] != "T" ||
      report.map_samples.rows() == 0) {
    throw UnsupportedError(
        "map_error_vs_frechet_hoeffding: report carries no 1-d transport map");
  }
  if (report.map_header.size() != 2) {
    throw UnsupportedError(
        "map_error_vs_frechet_hoeffding: ot-mode report required");
  }
  const Eigen::Index n = report.map_samples.rows();
  double err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    if (u < 0.05 || u > 0.95) continue;
    const double target = mu2.quantile(u);
    err = std::max(err, std::fabs(report.map_samples(i, 1) - target));
  }
  return err;
}

}  // namespace pdot
