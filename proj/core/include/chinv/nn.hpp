#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "chinv/rng.hpp"

namespace chinv::nn {

enum class Head { Linear, Softmax };

struct Grads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  void add(const Grads& o, double scale = 1.0);
  void scale(double f);
};

/// Forward activations kept for the backward pass.
struct Tape {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> hidden;  // post-tanh, one per hidden layer
  Eigen::VectorXd logits;               // last layer pre-head
  Eigen::VectorXd output;               // post-head
  std::vector<std::uint8_t> mask;       // empty means unmasked
};

/// Dense tanh MLP with an identity or masked-softmax output head and exact
/// reverse-mode gradients.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Head head);

  /// Uniform(-1/sqrt(fan_in), +) init; zero_final zeroes the last layer so a
  /// softmax head starts exactly uniform.
  void init_uniform(Rng& rng, bool zero_final = false);

  Eigen::VectorXd forward(const Eigen::VectorXd& x,
                          const std::vector<std::uint8_t>* mask = nullptr,
                          Tape* tape = nullptr) const;

  /// Stable masked log-probabilities (softmax head only); masked entries are
  /// -inf.
  Eigen::VectorXd log_forward(const Eigen::VectorXd& x,
                              const std::vector<std::uint8_t>* mask = nullptr) const;

  /// Gradients of a scalar loss given dL/d(output).
  Grads backward(const Tape& tape, const Eigen::VectorXd& dLdy) const;

  /// Gradients given dL/d(logits); bypasses the head Jacobian.
  Grads backward_logits(const Tape& tape, const Eigen::VectorXd& dLdz) const;

  /// Runs forward, lets the closure score the output and fill dL/d(output),
  /// and returns the loss with gradients in `out`.
  double grad(const Eigen::VectorXd& x, const std::vector<std::uint8_t>* mask,
              const std::function<double(const Eigen::VectorXd&,
                                         Eigen::VectorXd&)>& loss,
              Grads& out) const;

  void sgd_step(const Grads& g, double lr);

  Grads zero_grads() const;
  const std::vector<int>& sizes() const { return sizes_; }
  Head head() const { return head_; }
  std::vector<Eigen::MatrixXd>& weights() { return w_; }
  std::vector<Eigen::VectorXd>& biases() { return b_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return w_; }
  const std::vector<Eigen::VectorXd>& biases() const { return b_; }

  // Flat parameter view (layer by layer, W row-major then b); used by the
  // finite-difference oracle and checkpointing.
  int n_params() const;
  double param(int i) const;
  void set_param(int i, double v);

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

 private:
  std::vector<int> sizes_;
  Head head_ = Head::Linear;
  std::vector<Eigen::MatrixXd> w_;  // w_[i]: sizes_[i+1] x sizes_[i]
  std::vector<Eigen::VectorXd> b_;
};

/// target <- tau * target + (1 - tau) * source, elementwise.
void blend_params(Mlp& target, const Mlp& source, double tau);

/// Central-difference gradients of the same closure; the oracle for grad().
Grads finite_diff(const Mlp& net, const Eigen::VectorXd& x,
                  const std::vector<std::uint8_t>* mask,
                  const std::function<double(const Eigen::VectorXd&,
                                             Eigen::VectorXd&)>& loss,
                  double step = 1e-5);

/// Largest relative disagreement between analytic and finite-difference
/// gradients (scale-aware denominator).
double max_grad_rel_error(const Grads& analytic, const Grads& numeric);

}  // namespace chinv::nn
