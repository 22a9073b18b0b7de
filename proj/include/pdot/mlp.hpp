#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdot/rng.hpp"

namespace pdot {

enum class Activation { tanh, relu, linear };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Fully connected network. Hidden layers share one activation; the output
// layer is always linear. Weights are Glorot-uniform at creation, biases zero.
class Mlp {
 public:
  // Per-batch forward intermediates kept for backpropagation.
  struct Tape {
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post[0] is the input batch
  };

  // Parameter-shaped gradient (or moment) storage.
  struct Grads {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;

    void set_zero();
    bool all_finite() const;
  };

  // layer_sizes = {in, hidden..., out}; no hidden layers gives an affine map.
  static Mlp create(const std::vector<int>& layer_sizes, Activation act, Rng& rng);

  int in_dim() const { return layer_sizes_.front(); }
  int out_dim() const { return layer_sizes_.back(); }
  int n_layers() const { return static_cast<int>(w_.size()); }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Activation activation() const { return act_; }
  std::int64_t param_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  // Rows of x are samples; returns one output row per sample.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Tape& tape) const;

  // Gradient of mean_b(upstream_b . f(x_b)) with respect to parameters.
  // When input_grad is non-null it receives d(upstream_b . f(x_b))/dx_b
  // row-wise (not averaged).
  Grads backward_batch(const Tape& tape, const Eigen::MatrixXd& upstream,
                       Eigen::MatrixXd* input_grad = nullptr) const;

  // Single-sample convenience: gradient of upstream . f(x).
  Grads backward(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream,
                 Eigen::VectorXd* input_grad = nullptr) const;

  Grads zero_grads() const;

  const Eigen::MatrixXd& weight(int l) const { return w_[l]; }
  const Eigen::VectorXd& bias(int l) const { return b_[l]; }
  Eigen::MatrixXd& weight(int l) { return w_[l]; }
  Eigen::VectorXd& bias(int l) { return b_[l]; }

 private:
  std::vector<int> layer_sizes_;
  Activation act_ = Activation::tanh;
  std::vector<Eigen::MatrixXd> w_;  // w_[l]: out x in
  std::vector<Eigen::VectorXd> b_;
};

enum class StepDirection { descend, ascend };

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moment state for one network.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& net, AdamParams hp);

  // Applies one update in-place and advances the moments.
  void step(Mlp& net, const Mlp::Grads& g, StepDirection dir);

  // Computes the update the next step() would take, writing the adjusted
  // parameters into `preview` without touching moments (predictor stage of
  // the predictor-corrector scheme).
  void preview(const Mlp& net, const Mlp::Grads& g, StepDirection dir,
               Mlp& preview) const;

  AdamParams& params() { return hp_; }
  const AdamParams& params() const { return hp_; }
  std::int64_t t() const { return t_; }

 private:
  void apply(const Mlp& net, const Mlp::Grads& g, StepDirection dir,
             std::int64_t t, Mlp::Grads& m, Mlp::Grads& v, Mlp& out) const;

  AdamParams hp_;
  Mlp::Grads m_, v_;
  std::int64_t t_ = 0;
  mutable Mlp::Grads scratch_m_, scratch_v_;
};

}  // namespace pdot
