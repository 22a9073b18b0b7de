#include "pdot/check.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "pdot/config.hpp"
#include "pdot/errors.hpp"
#include "pdot/lp.hpp"
#include "pdot/mlp.hpp"
#include "pdot/neural_dual.hpp"
#include "pdot/rng.hpp"
#include "pdot/runner.hpp"
#include "pdot/saddle.hpp"
#include "pdot/sinkhorn.hpp"

namespace pdot {

namespace {

using Progress = std::function<void(const std::string&)>;

struct Suite {
  const CheckOptions* opts = nullptr;
  const Progress* progress = nullptr;
  std::vector<CheckItem> items;

  void add(CheckItem it) {
    if (*progress) (*progress)(format_check_line(it));
    items.push_back(std::move(it));
  }

  // Runs fn, timing it; on exception the item fails with the message.
  void item(const std::string& name,
            const std::function<void(CheckItem&)>& fn) {
    CheckItem it;
    it.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(it);
    } catch (const std::exception& e) {
      it.passed = false;
      it.relation = std::string("error: ") + e.what();
    }
    it.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    add(std::move(it));
  }

  RunResult run_config(const std::string& stem) {
    const ExperimentConfig cfg =
        parse_config_file(opts->configs_dir + "/" + stem + ".cfg");
    RunOverrides ov;
    ov.out_dir = opts->work_dir + "/" + stem;
    return run_experiment(cfg, ov);
  }
};

bool within(double measured, double target, double rel) {
  return std::fabs(measured - target) <= rel * std::fabs(target);
}

Measure fig1_mu1() { return Measure::lognormal(-0.02, 0.04); }
Measure fig1_mu2() { return Measure::lognormal(-0.03, 0.06); }

void figures_suite(Suite& s) {
  double fig2_oracle = 0.0;
  double fig4_lp_value = 0.0;
  TransportReport fig1_report;

  s.item("fig1_oracle", [&](CheckItem& it) {
    it.measured = frechet_hoeffding_value(builtin_cost("sum_squared"),
                                          fig1_mu1(), fig1_mu2(), 10000);
    it.target = 4.20;
    it.relation = "= 4.20 +- 0.01";
    it.passed = std::fabs(it.measured - it.target) <= 0.01;
  });

  s.item("fig1_value", [&](CheckItem& it) {
    RunResult rr = s.run_config("fig1_primal_dual");
    fig1_report = std::move(rr.report);
    it.measured = fig1_report.value;
    it.target = 4.20;
    it.relation = "within 2% of 4.20";
    it.passed = rr.exit_code == 0 && within(it.measured, it.target, 0.02);
  });

  s.item("fig1_map", [&](CheckItem& it) {
    it.measured =
        map_error_vs_frechet_hoeffding(fig1_report, fig1_mu1(), fig1_mu2());
    it.target = 0.05;
    it.relation = "sup error on u in [0.05,0.95] <= 0.05";
    it.passed = it.measured <= it.target;
  });

  s.item("fig2_oracle", [&](CheckItem& it) {
    fig2_oracle = frechet_hoeffding_value(builtin_cost("neg_diff_squared"),
                                          fig1_mu1(), fig1_mu2(), 10000);
    it.measured = fig2_oracle;
    it.target = -0.0022;
    it.relation = "= -0.0022 +- 0.0002";
    it.passed = std::fabs(it.measured - it.target) <= 0.0002;
  });

  s.item("fig2_value", [&](CheckItem& it) {
    const RunResult rr = s.run_config("fig2_primal_dual");
    it.measured = rr.report.value;
    it.target = fig2_oracle;
    it.relation = "within 15% of the comonotone oracle";
    it.passed = rr.exit_code == 0 && within(it.measured, it.target, 0.15);
  });

  for (const int d : {2, 10, 20}) {
    s.item("fig3_d" + std::to_string(d), [&, d](CheckItem& it) {
      const RunResult rr = s.run_config("fig3_w2_d" + std::to_string(d));
      it.measured = -rr.report.value;  // the run maximizes -|s1-s2|^2
      const double r = std::sqrt(2.0) - 1.0;
      it.target = d * r * r;
      it.relation = "within 5% of d(sqrt(2)-1)^2";
      it.passed = rr.exit_code == 0 && within(it.measured, it.target, 0.05);
    });
  }

  s.item("fig4_lp", [&](CheckItem& it) {
    const LpInstance inst = make_lp_instance(fig1_mu1(), fig1_mu2(),
                                             builtin_cost("cubic_sum"), 200,
                                             /*mot=*/true);
    fig4_lp_value = solve_lp(inst, LpMethod::dense_simplex).value;
    it.measured = fig4_lp_value;
    it.target = 9.19;
    it.relation = "within 1% of 9.19";
    it.passed = within(it.measured, it.target, 0.01);
  });

  TransportReport fig4_report;

  s.item("fig4_value", [&](CheckItem& it) {
    RunResult rr = s.run_config("fig4_mot");
    fig4_report = std::move(rr.report);
    it.measured = fig4_report.value;
    it.target = fig4_lp_value;
    it.relation = "within 3% of the LP reference";
    it.passed = rr.exit_code == 0 && within(it.measured, it.target, 0.03);
  });

  s.item("fig4_martingale", [&](CheckItem& it) {
    it.measured = fig4_report.diagnostics.count("martingale_residual")
                      ? fig4_report.diagnostics.at("martingale_residual")
                      : 1.0;
    it.target = 0.05;
    it.relation = "mixture martingale residual <= 0.05";
    it.passed = it.measured <= it.target;
  });

  s.item("fig4_sinkhorn", [&](CheckItem& it) {
    const DiscreteProblem prob = make_discrete_problem(
        fig1_mu1(), fig1_mu2(), builtin_cost("cubic_sum"), 200, 1e-3, true);
    const SinkhornResult res = sinkhorn_mot(prob, 50000, 1e-6);
    it.measured = res.value;
    it.target = fig4_lp_value;
    it.relation = "within 3% of the LP reference";
    it.passed = res.converged && within(it.measured, it.target, 0.03);
  });

  TransportReport fig5_report;

  s.item("fig5_w2", [&](CheckItem& it) {
    RunResult rr = s.run_config("fig5_6_anomaly");
    fig5_report = std::move(rr.report);
    it.measured = fig5_report.value;
    it.target = 0.01;
    it.relation = "final squared-distance estimate <= 0.01";
    it.passed = rr.exit_code == 0 && it.measured <= it.target;
  });

  s.item("fig6_flag_abnormal", [&](CheckItem& it) {
    it.measured = fig5_report.diagnostics.count("flag_rate_abnormal")
                      ? fig5_report.diagnostics.at("flag_rate_abnormal")
                      : 0.0;
    it.target = 0.95;
    it.relation = "flag rate >= 0.95";
    it.passed = it.measured >= it.target;
  });

  s.item("fig6_flag_normal", [&](CheckItem& it) {
    it.measured = fig5_report.diagnostics.count("flag_rate_normal")
                      ? fig5_report.diagnostics.at("flag_rate_normal")
                      : 1.0;
    it.target = 0.05;
    it.relation = "flag rate <= 0.05";
    it.passed = it.measured <= it.target;
  });

  s.item("fig6a_entropic_bias", [&](CheckItem& it) {
    NeuralDualConfig nc;
    nc.steps = 150000;
    nc.eval_every = 5000;
    nc.minibatch = 256;
    nc.eps_start = 1.0;
    nc.anneal_frac = 0.6;
    nc.grad_clip = 100.0;
    nc.seed = 11;
    auto value_at = [&](double eps) {
      NeuralDualProblem prob = make_neural_dual_problem(
          fig1_mu1(), fig1_mu2(), builtin_cost("sum_squared"), SaddleMode::ot,
          nc);
      return neural_entropic(prob, eps, nc).value;
    };
    const double coarse = value_at(0.1);
    const double fine = value_at(0.01);
    it.measured = coarse;
    it.target = fine;
    it.relation = "value(eps=0.1) < value(eps=0.01)";
    it.passed = coarse < fine;
  });

  s.item("fig6b_penalization_instability", [&](CheckItem& it) {
    NeuralDualConfig nc;
    nc.steps = 100000;
    nc.eval_every = 2000;
    nc.seed = 12;
    auto last10_var = [&](double gamma) {
      NeuralDualProblem prob = make_neural_dual_problem(
          fig1_mu1(), fig1_mu2(), builtin_cost("neg_diff_squared"),
          SaddleMode::ot, nc);
      const TransportReport rep = penalization(prob, gamma, nc);
      const std::size_t n = rep.trace.size();
      const std::size_t k = std::min<std::size_t>(10, n);
      double m = 0.0;
      for (std::size_t i = n - k; i < n; ++i) m += rep.trace[i].objective;
      m /= static_cast<double>(k);
      double v = 0.0;
      for (std::size_t i = n - k; i < n; ++i) {
        const double d = rep.trace[i].objective - m;
        v += d * d;
      }
      return v / static_cast<double>(k > 1 ? k - 1 : 1);
    };
    const double lo = last10_var(1e3);
    const double hi = last10_var(1e4);
    it.measured = hi;
    it.target = lo;
    it.relation = "last-10 variance at gamma=1e4 > gamma=1e3";
    it.passed = hi > lo;
  });
}

void properties_suite(Suite& s) {
  s.item("prop_backprop_fd", [&](CheckItem& it) {
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int in = 1 + static_cast<int>(rng.index(3));
      const int out = 1 + static_cast<int>(rng.index(2));
      const int hid = 2 + static_cast<int>(rng.index(4));
      const Activation act = trial % 3 == 0   ? Activation::linear
                             : trial % 3 == 1 ? Activation::relu
                                              : Activation::tanh;
      Mlp net = Mlp::create({in, hid, hid, out}, act, rng);
      const int b = 3;
      Eigen::MatrixXd x(b, in), up(b, out);
      for (int r = 0; r < b; ++r) {
        for (int c = 0; c < in; ++c) x(r, c) = rng.normal();
        for (int c = 0; c < out; ++c) up(r, c) = rng.normal();
      }
      Mlp::Tape tape;
      net.forward_batch(x, tape);
      const Mlp::Grads g = net.backward_batch(tape, up);
      auto loss = [&]() {
        return (net.forward_batch(x).array() * up.array()).sum() / b;
      };
      const double h = 1e-6;
      for (int l = 0; l < net.n_layers(); ++l) {
        for (Eigen::Index r = 0; r < net.weight(l).rows(); ++r) {
          for (Eigen::Index c = 0; c < net.weight(l).cols(); ++c) {
            const double keep = net.weight(l)(r, c);
            net.weight(l)(r, c) = keep + h;
            const double jp = loss();
            net.weight(l)(r, c) = keep - h;
            const double jm = loss();
            net.weight(l)(r, c) = keep;
            const double fd = (jp - jm) / (2 * h);
            worst = std::max(worst, std::fabs(g.w[l](r, c) - fd) /
                                        std::max(1e-3, std::fabs(fd)));
          }
        }
        for (Eigen::Index r = 0; r < net.bias(l).size(); ++r) {
          const double keep = net.bias(l)[r];
          net.bias(l)[r] = keep + h;
          const double jp = loss();
          net.bias(l)[r] = keep - h;
          const double jm = loss();
          net.bias(l)[r] = keep;
          const double fd = (jp - jm) / (2 * h);
          worst = std::max(worst, std::fabs(g.b[l][r] - fd) /
                                      std::max(1e-3, std::fabs(fd)));
        }
      }
    }
    it.measured = worst;
    it.target = 1e-5;
    it.relation = "max relative gradient error <= 1e-5 over 20 nets";
    it.passed = worst <= 1e-5;
  });

  s.item("prop_lp_duality", [&](CheckItem& it) {
    const LpInstance inst = make_lp_instance(fig1_mu1(), fig1_mu2(),
                                             builtin_cost("cubic_sum"), 60,
                                             /*mot=*/true);
    const LpSolution sol = solve_lp(inst, LpMethod::dense_simplex);
    double cs = 0.0;  // complementary slackness on the support
    for (const auto& cell : sol.coupling) {
      const double support =
          sol.u1[cell.i] + sol.u2[cell.j] +
          sol.h[cell.i] * (inst.atoms2[cell.j] - inst.atoms1[cell.i]);
      cs = std::max(cs, std::fabs(inst.cost(cell.i, cell.j) - support));
    }
    it.measured = std::max(std::fabs(sol.value - sol.dual_value), cs);
    it.target = 1e-7;
    it.relation = "duality gap and support slackness <= 1e-7";
    it.passed = it.measured <= 1e-7;
  });

  s.item("prop_sinkhorn_marginals", [&](CheckItem& it) {
    const DiscreteProblem prob = make_discrete_problem(
        fig1_mu1(), fig1_mu2(), builtin_cost("sum_squared"), 100, 0.01, false);
    SinkhornState st = make_sinkhorn_state(prob, false);
    sinkhorn_update_u1(prob, st);
    sinkhorn_residuals(prob, st);
    const double r1 = st.residual1;
    sinkhorn_update_u2(prob, st);
    sinkhorn_residuals(prob, st);
    const double r2 = st.residual2;
    it.measured = std::max(r1, r2);
    it.target = 1e-12;
    it.relation = "exact marginal after each half-iteration <= 1e-12";
    it.passed = it.measured <= 1e-12;
  });

  s.item("prop_sinkhorn_martingale", [&](CheckItem& it) {
    const DiscreteProblem prob = make_discrete_problem(
        fig1_mu1(), fig1_mu2(), builtin_cost("cubic_sum"), 100, 1e-2, true);
    const double tol = 1e-6;
    const SinkhornResult res = sinkhorn_mot(prob, 50000, tol);
    it.measured = res.state.residual_mart;
    it.target = 10 * tol;
    it.relation = "martingale residual <= 10*tol";
    it.passed = res.converged && it.measured <= it.target;
  });

  s.item("prop_gauge_invariance", [&](CheckItem& it) {
    double worst = 0.0;
    for (const SaddleMode mode : {SaddleMode::ot, SaddleMode::mot}) {
      SaddleConfig sc;
      sc.mode = mode;
      sc.n_paths = 2048;
      sc.seed = 5;
      SaddleProblem prob = make_saddle_problem(
          fig1_mu1(), fig1_mu2(),
          builtin_cost(mode == SaddleMode::ot ? "sum_squared" : "cubic_sum"),
          sc);
      const double before = objective_full(prob);
      const int last = prob.u.n_layers() - 1;
      prob.u.bias(last).array() += 0.37;
      const double after = objective_full(prob);
      worst = std::max(worst,
                       std::fabs(after - before) / std::max(1.0, std::fabs(before)));
    }
    it.measured = worst;
    it.target = 1e-12;
    it.relation = "objective shift under u + const <= 1e-12";
    it.passed = worst <= 1e-12;
  });

  s.item("prop_one_layer_convergence", [&](CheckItem& it) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      SaddleConfig sc;
      sc.mode = SaddleMode::ot;
      sc.steps = 80000;
      sc.eval_every = 2000;
      sc.u_hidden = {8};
      sc.map_hidden = {8};
      sc.seed = seed;
      SaddleProblem prob = make_saddle_problem(fig1_mu1(), fig1_mu2(),
                                               builtin_cost("sum_squared"), sc);
      const TransportReport rep = solve(prob, sc);
      const std::size_t n = rep.trace.size();
      const std::size_t k = std::min<std::size_t>(10, n);
      double m = 0.0;
      for (std::size_t i = n - k; i < n; ++i) m += rep.trace[i].objective;
      m /= static_cast<double>(k);
      double v = 0.0;
      for (std::size_t i = n - k; i < n; ++i) {
        const double d = rep.trace[i].objective - m;
        v += d * d;
      }
      const double sd = std::sqrt(v / static_cast<double>(k - 1));
      if (!rep.converged) worst = 1.0;
      worst = std::max(worst, sd / std::fabs(rep.value));
    }
    it.measured = worst;
    it.target = 0.01;
    it.relation = "last-10 trace sd <= 1% of |value| on 20 seeds";
    it.passed = worst <= 0.01;
  });
}

}  // namespace

std::vector<CheckItem> run_check(const std::string& suite,
                                 const CheckOptions& opts,
                                 const Progress& progress) {
  if (suite != "figures" && suite != "properties" && suite != "all") {
    throw ParameterError("run_check: unknown suite \"" + suite +
                         "\" (figures, properties, all)");
  }
  Suite s;
  s.opts = &opts;
  s.progress = &progress;
  if (suite == "figures" || suite == "all") figures_suite(s);
  if (suite == "properties" || suite == "all") properties_suite(s);
  return std::move(s.items);
}

bool all_passed(const std::vector<CheckItem>& items) {
  for (const auto& it : items) {
    if (!it.passed) return false;
  }
  return true;
}

std::string format_check_line(const CheckItem& item) {
  std::ostringstream ss;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-32s", item.name.c_str());
  ss << (item.passed ? "PASS " : "FAIL ") << buf;
  std::snprintf(buf, sizeof(buf), " measured=%-14.8g target=%-12.8g",
                item.measured, item.target);
  ss << buf << " [" << item.relation << "]";
  std::snprintf(buf, sizeof(buf), "  (%.1fs)", item.seconds);
  ss << buf;
  return ss.str();
}

}  // namespace pdot
