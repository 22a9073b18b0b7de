#include <cinttypes>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "pdot.h"

namespace {

int finish(pdot_status st) {
  if (st == PDOT_ERR) {
    std::fprintf(stderr, "error: %s\n", pdot_last_error());
    return 1;
  }
  return st == PDOT_OK ? 0 : 2;
}

int cmd_run(const std::string& config, const std::string& out_dir,
            std::int64_t seed, std::int64_t steps) {
  pdot_report* rep = nullptr;
  const pdot_status st =
      pdot_run(config.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
               seed, steps, &rep);
  if (st == PDOT_ERR) return finish(st);
  std::printf("value      %.10g\n", pdot_report_value(rep));
  std::printf("converged  %s\n", pdot_report_converged(rep) ? "yes" : "no");
  std::printf("steps      %" PRId64 "\n", pdot_report_steps(rep));
  const std::int64_t nd = pdot_report_diagnostic_count(rep);
  for (std::int64_t i = 0; i < nd; ++i) {
    std::printf("%-10s %.10g\n", pdot_report_diagnostic_name(rep, i),
                pdot_report_diagnostic_value(rep, i));
  }
  const std::int64_t nw = pdot_report_warning_count(rep);
  for (std::int64_t i = 0; i < nw; ++i) {
    std::printf("warning: %s\n", pdot_report_warning(rep, i));
  }
  pdot_report_free(rep);
  return finish(st);
}

int cmd_check(const std::string& suite, const std::string& configs_dir,
              const std::string& work_dir) {
  const auto print_line = [](const char* line, void*) {
    std::printf("%s\n", line);
    std::fflush(stdout);
  };
  const pdot_status st = pdot_check(suite.c_str(), configs_dir.c_str(),
                                    work_dir.c_str(), print_line, nullptr);
  if (st != PDOT_ERR)
    std::printf("%s\n", st == PDOT_OK ? "all checks passed" : "CHECK FAILED");
  return finish(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdot: neural primal-dual (martingale) optimal transport"};
  app.require_subcommand(1);

  std::string config, out_dir;
  std::int64_t seed = -1, steps = -1;
  auto* run = app.add_subcommand("run", "run one experiment from a config");
  run->add_option("config", config, "config file")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--seed", seed, "seed override");
  run->add_option("--steps", steps, "step-count override (smoke runs)");

  std::string suite = "all", configs_dir = "configs", work_dir = "out/check";
  auto* check = app.add_subcommand("check", "run a verification suite");
  check->add_option("suite", suite, "figures | properties | all");
  check->add_option("--configs", configs_dir, "bundled configs directory");
  check->add_option("--work", work_dir, "artifact directory for check runs");

  auto* oracle = app.add_subcommand("oracle", "reference value calculators");
  oracle->require_subcommand(1);
  std::string cost, mu1, mu2, method = "dense_simplex";
  int quad = 10000, dim = 1, atoms = 100;
  double var1 = 1.0, var2 = 2.0;
  bool mot = false;

  auto* fh = oracle->add_subcommand("fh", "comonotone (Frechet-Hoeffding) value");
  fh->add_option("--cost", cost, "cost spec")->required();
  fh->add_option("--mu1", mu1, "first marginal spec")->required();
  fh->add_option("--mu2", mu2, "second marginal spec")->required();
  fh->add_option("--quad", quad, "quadrature points");

  auto* gauss = oracle->add_subcommand("gaussian", "closed-form W2^2 between normals");
  gauss->add_option("--dim", dim, "dimension")->required();
  gauss->add_option("--var1", var1, "first variance")->required();
  gauss->add_option("--var2", var2, "second variance")->required();

  auto* lp = oracle->add_subcommand("lp", "discretized LP value");
  lp->add_option("--cost", cost, "cost spec")->required();
  lp->add_option("--mu1", mu1, "first marginal spec")->required();
  lp->add_option("--mu2", mu2, "second marginal spec")->required();
  lp->add_option("--atoms", atoms, "quantile atoms per marginal");
  lp->add_flag("--mot", mot, "add martingale constraints");
  lp->add_option("--method", method, "dense_simplex | cutting_plane");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config, out_dir, seed, steps);
  if (check->parsed()) return cmd_check(suite, configs_dir, work_dir);

  double value = 0.0;
  pdot_status st = PDOT_ERR;
  if (fh->parsed()) {
    st = pdot_oracle_frechet_hoeffding(cost.c_str(), mu1.c_str(), mu2.c_str(),
                                       quad, &value);
  } else if (gauss->parsed()) {
    st = pdot_oracle_gaussian_w2(dim, var1, var2, &value);
  } else if (lp->parsed()) {
    st = pdot_oracle_lp(cost.c_str(), mu1.c_str(), mu2.c_str(), atoms,
                        mot ? 1 : 0, method.c_str(), &value);
  }
  if (st == PDOT_OK) std::printf("%.10g\n", value);
  return finish(st);
}
