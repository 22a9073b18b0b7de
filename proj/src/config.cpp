#include "pdot/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include "csv_impl.hpp"
#include "pdot/errors.hpp"

namespace pdot {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ParameterError(key + ": \"" + v + "\" is not a number");
  }
  return x;
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  const auto k = static_cast<std::int64_t>(x);
  if (static_cast<double>(k) != x) {
    throw ParameterError(key + ": \"" + v + "\" is not an integer");
  }
  return k;
}

int to_int(const std::string& key, const std::string& v) {
  return static_cast<int>(to_i64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError(key + ": \"" + v + "\" is not a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(key, item));
  }
  return out;
}

std::map<std::string, std::string> kv_pairs(const std::string& spec,
                                            std::string* head) {
  std::stringstream ss(spec);
  std::string tok;
  std::map<std::string, std::string> kv;
  bool first = true;
  while (ss >> tok) {
    if (first) {
      *head = tok;
      first = false;
      continue;
    }
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected key=value, got \"" + tok + "\"");
    }
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (first) throw ParseError("empty spec string");
  return kv;
}

double need(const std::map<std::string, std::string>& kv,
            const std::string& family, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    throw ParameterError(family + " measure: missing " + key);
  }
  return to_double(key, it->second);
}

}  // namespace

Measure parse_measure(const std::string& spec) {
  std::string family;
  auto kv = kv_pairs(spec, &family);
  if (family == "normal" || family == "lognormal") {
    int dim = 1;
    if (const auto it = kv.find("dim"); it != kv.end()) {
      dim = to_int("dim", it->second);
    }
    if (family == "normal") {
      const double mean = need(kv, family, "mean");
      const double var = need(kv, family, "var");
      return Measure::normal(mean, var, dim);
    }
    const double meanlog = need(kv, family, "meanlog");
    const double varlog = need(kv, family, "varlog");
    return Measure::lognormal(meanlog, varlog, dim);
  }
  if (family == "empirical") {
    const auto it = kv.find("file");
    if (it == kv.end()) {
      throw ParameterError("empirical measure: missing file");
    }
    std::vector<std::string> header;
    Eigen::MatrixXd data = detail::read_csv(it->second, &header);
    if (data.rows() == 0 || data.cols() == 0) {
      throw ParameterError("empirical measure: \"" + it->second + "\" is empty");
    }
    if (!header.empty() && header.back() == "weight") {
      const Eigen::VectorXd w = data.col(data.cols() - 1);
      return Measure::empirical(data.leftCols(data.cols() - 1), w);
    }
    return Measure::empirical(data);
  }
  throw ParameterError("unknown measure family \"" + family + "\"");
}

CostFn parse_cost(const std::string& spec) {
  const std::string s = trim(spec);
  const auto sp = s.find_first_of(" \t");
  const std::string head = sp == std::string::npos ? s : s.substr(0, sp);
  if (head != "poly") return builtin_cost(head);
  if (sp == std::string::npos) {
    throw ParameterError("cost: poly needs at least one monomial");
  }
  std::string expr = s.substr(sp + 1);
  std::vector<PolyTerm> terms;
  std::stringstream ss(expr);
  std::string mono;
  while (std::getline(ss, mono, '+')) {
    mono = trim(mono);
    if (mono.empty()) continue;
    PolyTerm t;
    t.coef = 1.0;
    t.p1 = 0;
    t.p2 = 0;
    bool saw_coef = false;
    std::stringstream ms(mono);
    std::string factor;
    while (std::getline(ms, factor, '*')) {
      factor = trim(factor);
      if (factor.empty()) continue;
      if (factor[0] == 's' &&
          (factor.rfind("s1", 0) == 0 || factor.rfind("s2", 0) == 0)) {
        int power = 1;
        const auto caret = factor.find('^');
        if (caret != std::string::npos) {
          power = to_int("cost power", factor.substr(caret + 1));
        } else if (factor.size() != 2) {
          throw ParseError("cost: bad factor \"" + factor + "\"");
        }
        (factor[1] == '1' ? t.p1 : t.p2) += power;
      } else {
        if (saw_coef) {
          throw ParseError("cost: two coefficients in \"" + mono + "\"");
        }
        t.coef = to_double("cost coefficient", factor);
        saw_coef = true;
      }
    }
    terms.push_back(t);
  }
  if (terms.empty()) {
    throw ParameterError("cost: poly needs at least one monomial");
  }
  return polynomial_cost(terms);
}

namespace {

SolverKind parse_solver(const std::string& v) {
  if (v == "primal_dual") return SolverKind::primal_dual;
  if (v == "predictor_corrector") return SolverKind::predictor_corrector;
  if (v == "sinkhorn") return SolverKind::sinkhorn;
  if (v == "neural_entropic") return SolverKind::neural_entropic;
  if (v == "penalization") return SolverKind::penalization;
  if (v == "lp") return SolverKind::lp;
  throw ParameterError("solver.kind: unknown solver \"" + v + "\"");
}

ProblemMode parse_mode(const std::string& v) {
  if (v == "ot") return ProblemMode::ot;
  if (v == "mot") return ProblemMode::mot;
  if (v == "anomaly") return ProblemMode::anomaly;
  throw ParameterError("problem.mode: unknown mode \"" + v + "\"");
}

void apply_problem(ExperimentConfig& c, const std::string& key,
                   const std::string& v) {
  if (key == "mode") {
    c.mode = parse_mode(v);
  } else if (key == "cost") {
    c.cost_spec = v;
  } else if (key == "dim") {
    c.dim = to_int("problem.dim", v);
  } else if (key == "mu1") {
    c.mu1_spec = v;
  } else if (key == "mu2") {
    c.mu2_spec = v;
  } else if (key == "real") {
    c.real_spec = v;
  } else if (key == "prior") {
    c.prior_spec = v;
  } else if (key == "prior_dim") {
    c.prior_dim = to_int("problem.prior_dim", v);
  } else {
    throw ParameterError("problem." + key + ": unknown key");
  }
}

void apply_solver(ExperimentConfig& c, const std::string& key,
                  const std::string& v) {
  if (key == "kind") {
    c.kind = parse_solver(v);
  } else if (key == "steps") {
    c.steps = to_i64("solver.steps", v);
  } else if (key == "eval_every") {
    c.eval_every = to_i64("solver.eval_every", v);
  } else if (key == "eta") {
    c.eta = to_double("solver.eta", v);
  } else if (key == "minibatch") {
    c.minibatch = to_int("solver.minibatch", v);
  } else if (key == "n_paths") {
    c.n_paths = to_i64("solver.n_paths", v);
  } else if (key == "u_hidden") {
    c.u_hidden = to_int_list("solver.u_hidden", v);
  } else if (key == "map_hidden") {
    c.map_hidden = to_int_list("solver.map_hidden", v);
  } else if (key == "activation") {
    c.activation = v;
  } else if (key == "shift_cost") {
    c.shift_cost = to_bool("solver.shift_cost", v);
  } else if (key == "n_maps") {
    c.n_maps = to_int("solver.n_maps", v);
  } else if (key == "eta_decay_every") {
    c.eta_decay_every = to_i64("solver.eta_decay_every", v);
  } else if (key == "q_lr_scale") {
    c.q_lr_scale = to_double("solver.q_lr_scale", v);
  } else if (key == "divergence_threshold") {
    c.divergence_threshold = to_double("solver.divergence_threshold", v);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_i64("solver.seed", v));
    c.seed_set = true;
  } else if (key == "eps") {
    c.eps = to_double("solver.eps", v);
  } else if (key == "n_atoms") {
    c.n_atoms = to_int("solver.n_atoms", v);
  } else if (key == "max_iter") {
    c.max_iter = to_i64("solver.max_iter", v);
  } else if (key == "tol") {
    c.tol = to_double("solver.tol", v);
  } else if (key == "eps_start") {
    c.eps_start = to_double("solver.eps_start", v);
  } else if (key == "anneal_frac") {
    c.anneal_frac = to_double("solver.anneal_frac", v);
  } else if (key == "grad_clip") {
    c.grad_clip = to_double("solver.grad_clip", v);
  } else if (key == "gamma") {
    c.gamma = to_double("solver.gamma", v);
  } else if (key == "lp_method") {
    c.lp_method = v;
  } else if (key == "inner_per_outer") {
    c.inner_per_outer = to_i64("solver.inner_per_outer", v);
  } else if (key == "outer_eta") {
    c.outer_eta = to_double("solver.outer_eta", v);
  } else if (key == "m_kde") {
    c.m_kde = to_i64("solver.m_kde", v);
  } else if (key == "lambda_quantile") {
    c.lambda_quantile = to_double("solver.lambda_quantile", v);
  } else if (key == "n_score") {
    c.n_score = to_i64("solver.n_score", v);
  } else {
    throw ParameterError("solver." + key + ": unknown key");
  }
}

void apply_output(ExperimentConfig& c, const std::string& key,
                  const std::string& v) {
  if (key == "out_dir") {
    c.out_dir = v;
  } else if (key == "dump_params") {
    c.dump_params = to_bool("output.dump_params", v);
  } else {
    throw ParameterError("output." + key + ": unknown key");
  }
}

void validate(const ExperimentConfig& c) {
  if (!c.seed_set) {
    throw ParameterError("solver.seed is required");
  }
  activation_from_string(c.activation);
  parse_cost(c.cost_spec);
  const bool iterative = c.kind == SolverKind::primal_dual ||
                         c.kind == SolverKind::predictor_corrector ||
                         c.kind == SolverKind::neural_entropic ||
                         c.kind == SolverKind::penalization ||
                         c.mode == ProblemMode::anomaly;
  if (iterative && c.steps <= 0) {
    throw ParameterError("solver.steps must be positive");
  }
  if (c.mode == ProblemMode::anomaly) {
    if (c.real_spec.empty()) throw ParameterError("problem.real is required");
    if (c.prior_spec.empty()) throw ParameterError("problem.prior is required");
    if (c.kind != SolverKind::primal_dual) {
      throw ParameterError("solver.kind: anomaly mode uses primal_dual");
    }
  } else {
    if (c.mu1_spec.empty()) throw ParameterError("problem.mu1 is required");
    if (c.mu2_spec.empty()) throw ParameterError("problem.mu2 is required");
  }
  if (c.kind == SolverKind::sinkhorn || c.kind == SolverKind::lp) {
    if (c.n_atoms <= 0) throw ParameterError("solver.n_atoms must be positive");
  }
  if (c.kind == SolverKind::sinkhorn || c.kind == SolverKind::neural_entropic) {
    if (c.eps <= 0.0) throw ParameterError("solver.eps must be positive");
  }
  if (c.kind == SolverKind::penalization && c.gamma < 0.0) {
    throw ParameterError("solver.gamma must be nonnegative");
  }
  if (c.kind == SolverKind::lp && c.lp_method != "dense_simplex" &&
      c.lp_method != "cutting_plane") {
    throw ParameterError("solver.lp_method: unknown method \"" + c.lp_method +
                         "\"");
  }
  if (c.kind == SolverKind::lp && c.mode == ProblemMode::anomaly) {
    throw ParameterError("solver.kind: lp does not support anomaly mode");
  }
  if (c.minibatch <= 0) throw ParameterError("solver.minibatch must be positive");
  if (c.n_paths <= 0) throw ParameterError("solver.n_paths must be positive");
  if (c.dim <= 0) throw ParameterError("problem.dim must be positive");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError("line " + std::to_string(lineno) +
                         ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "problem" && section != "solver" && section != "output") {
        throw ParseError("line " + std::to_string(lineno) +
                         ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": key outside any section");
    }
    if (section == "problem") {
      apply_problem(cfg, key, value);
    } else if (section == "solver") {
      apply_solver(cfg, key, value);
    } else {
      apply_output(cfg, key, value);
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config_text(detail::read_text_file(path));
}

}  // namespace pdot
