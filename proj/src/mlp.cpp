#include "pdot/mlp.hpp"

#include <cmath>

#include "pdot/errors.hpp"

namespace pdot {

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw ParameterError("unknown activation \"" + s + "\"");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
  }
  return "?";
}

void Mlp::Grads::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

bool Mlp::Grads::all_finite() const {
  for (const auto& m : w) {
    if (!m.allFinite()) return false;
  }
  for (const auto& v : b) {
    if (!v.allFinite()) return false;
  }
  return true;
}

Mlp Mlp::create(const std::vector<int>& layer_sizes, Activation act, Rng& rng) {
  if (layer_sizes.size() < 2) {
    throw ParameterError("Mlp: need at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ParameterError("Mlp: layer sizes must be positive");
  }
  Mlp net;
  net.layer_sizes_ = layer_sizes;
  net.act_ = act;
  const int n_layers = static_cast<int>(layer_sizes.size()) - 1;
  net.w_.resize(n_layers);
  net.b_.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double scale = std::sqrt(6.0 / (fan_in + fan_out));
    net.w_[l].resize(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) {
        net.w_[l](i, j) = (2.0 * rng.uniform() - 1.0) * scale;
      }
    }
    net.b_[l] = Eigen::VectorXd::Zero(fan_out);
  }
  return net;
}

std::int64_t Mlp::param_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    n += w_[l].size() + b_[l].size();
  }
  return n;
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& x) {
  switch (act) {
    case Activation::tanh:
      x = x.array().tanh();
      break;
    case Activation::relu:
      x = x.array().max(0.0);
      break;
    case Activation::linear:
      break;
  }
}

// Derivative as a function of pre-activation `pre` and activated value `post`.
Eigen::ArrayXXd activation_deriv(Activation act, const Eigen::MatrixXd& pre,
                                 const Eigen::MatrixXd& post) {
  switch (act) {
    case Activation::tanh:
      return 1.0 - post.array().square();
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>();
    case Activation::linear:
      break;
  }
  return Eigen::ArrayXXd::Ones(pre.rows(), pre.cols());
}

}  // namespace

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x, Tape& tape) const {
  if (x.cols() != in_dim()) throw ShapeError("Mlp::forward: input dimension mismatch");
  const int n = n_layers();
  tape.pre.resize(n);
  tape.post.resize(n + 1);
  tape.post[0] = x;
  for (int l = 0; l < n; ++l) {
    tape.pre[l] = (tape.post[l] * w_[l].transpose()).rowwise() + b_[l].transpose();
    tape.post[l + 1] = tape.pre[l];
    if (l + 1 < n) apply_activation(act_, tape.post[l + 1]);
  }
  return tape.post[n];
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  if (x.cols() != in_dim()) throw ShapeError("Mlp::forward: input dimension mismatch");
  const int n = n_layers();
  Eigen::MatrixXd a = x;
  for (int l = 0; l < n; ++l) {
    a = (a * w_[l].transpose()).rowwise() + b_[l].transpose();
    if (l + 1 < n) apply_activation(act_, a);
  }
  return a;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x.transpose()).row(0).transpose();
}

Mlp::Grads Mlp::backward_batch(const Tape& tape, const Eigen::MatrixXd& upstream,
                               Eigen::MatrixXd* input_grad) const {
  const int n = n_layers();
  if (upstream.cols() != out_dim() || upstream.rows() != tape.post[0].rows()) {
    throw ShapeError("Mlp::backward: upstream shape mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(upstream.rows());
  Grads g = zero_grads();
  Eigen::MatrixXd delta = upstream;  // gradient wrt pre-activation, last layer
  for (int l = n - 1; l >= 0; --l) {
    g.w[l] = (delta.transpose() * tape.post[l]) * inv_b;
    g.b[l] = delta.colwise().sum().transpose() * inv_b;
    if (l > 0) {
      delta = (delta * w_[l]).array() *
              activation_deriv(act_, tape.pre[l - 1], tape.post[l]);
    } else if (input_grad != nullptr) {
      *input_grad = delta * w_[0];
    }
  }
  return g;
}

Mlp::Grads Mlp::backward(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream,
                         Eigen::VectorXd* input_grad) const {
  Tape tape;
  forward_batch(x.transpose(), tape);
  Eigen::MatrixXd ig;
  Grads g = backward_batch(tape, upstream.transpose(),
                           input_grad != nullptr ? &ig : nullptr);
  if (input_grad != nullptr) *input_grad = ig.row(0).transpose();
  return g;
}

Mlp::Grads Mlp::zero_grads() const {
  Grads g;
  g.w.resize(w_.size());
  g.b.resize(b_.size());
  for (std::size_t l = 0; l < w_.size(); ++l) {
    g.w[l] = Eigen::MatrixXd::Zero(w_[l].rows(), w_[l].cols());
    g.b[l] = Eigen::VectorXd::Zero(b_[l].size());
  }
  return g;
}

AdamState::AdamState(const Mlp& net, AdamParams hp) : hp_(hp) {
  m_ = net.zero_grads();
  v_ = net.zero_grads();
  scratch_m_ = net.zero_grads();
  scratch_v_ = net.zero_grads();
}

void AdamState::apply(const Mlp& net, const Mlp::Grads& g, StepDirection dir,
                      std::int64_t t, Mlp::Grads& m, Mlp::Grads& v,
                      Mlp& out) const {
  const double sign = dir == StepDirection::ascend ? -1.0 : 1.0;
  const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    m.w[l] = hp_.beta1 * m.w[l] + (1.0 - hp_.beta1) * sign * g.w[l];
    v.w[l] = hp_.beta2 * v.w[l].array().matrix() +
             (1.0 - hp_.beta2) * g.w[l].array().square().matrix();
    out.weight(l) = net.weight(l).array() -
                    hp_.lr * (m.w[l].array() / c1) /
                        ((v.w[l].array() / c2).sqrt() + hp_.eps);
    m.b[l] = hp_.beta1 * m.b[l] + (1.0 - hp_.beta1) * sign * g.b[l];
    v.b[l] = hp_.beta2 * v.b[l].array().matrix() +
             (1.0 - hp_.beta2) * g.b[l].array().square().matrix();
    out.bias(l) = net.bias(l).array() -
                  hp_.lr * (m.b[l].array() / c1) /
                      ((v.b[l].array() / c2).sqrt() + hp_.eps);
  }
}

void AdamState::step(Mlp& net, const Mlp::Grads& g, StepDirection dir) {
  ++t_;
  apply(net, g, dir, t_, m_, v_, net);
}

void AdamState::preview(const Mlp& net, const Mlp::Grads& g, StepDirection dir,
                        Mlp& preview) const {
  scratch_m_ = m_;
  scratch_v_ = v_;
  preview = net;
  apply(net, g, dir, t_ + 1, scratch_m_, scratch_v_, preview);
}

}  // namespace pdot
