#include "chinv/nn.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::nn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void Grads::add(const Grads& o, double scale) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] += scale * o.w[i];
    b[i] += scale * o.b[i];
  }
}

void Grads::scale(double f) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] *= f;
    b[i] *= f;
  }
}

Mlp::Mlp(std::vector<int> sizes, Head head)
    : sizes_(std::move(sizes)), head_(head) {
  if (sizes_.size() < 2)
    throw ContractError("Mlp: need at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) throw ContractError("Mlp: layer sizes must be positive");
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    w_.emplace_back(Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]));
    b_.emplace_back(Eigen::VectorXd::Zero(sizes_[i + 1]));
  }
}

void Mlp::init_uniform(Rng& rng, bool zero_final) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (zero_final && l + 1 == w_.size()) {
      w_[l].setZero();
      b_[l].setZero();
      continue;
    }
    const double a = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    for (int r = 0; r < w_[l].rows(); ++r)
      for (int c = 0; c < w_[l].cols(); ++c)
        w_[l](r, c) = (2.0 * uniform01(rng) - 1.0) * a;
    for (int r = 0; r < b_[l].size(); ++r)
      b_[l][r] = (2.0 * uniform01(rng) - 1.0) * a;
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x,
                             const std::vector<std::uint8_t>* mask,
                             Tape* tape) const {
  if (x.size() != sizes_.front())
    throw ContractError("Mlp: input size " + std::to_string(x.size()) +
                        " != " + std::to_string(sizes_.front()));
  if (mask && static_cast<int>(mask->size()) != sizes_.back())
    throw ContractError("Mlp: mask size mismatch");

  if (tape) {
    tape->input = x;
    tape->hidden.clear();
    tape->mask = mask ? *mask : std::vector<std::uint8_t>{};
  }
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    a = (w_[l] * a + b_[l]).array().tanh();
    if (tape) tape->hidden.push_back(a);
  }
  Eigen::VectorXd z = w_.back() * a + b_.back();
  if (tape) tape->logits = z;

  Eigen::VectorXd y;
  if (head_ == Head::Linear) {
    y = z;
  } else {
    double zmax = kNegInf;
    for (int j = 0; j < z.size(); ++j)
      if (!mask || (*mask)[j]) zmax = std::max(zmax, z[j]);
    if (zmax == kNegInf) throw ContractError("Mlp: all outputs masked");
    y = Eigen::VectorXd::Zero(z.size());
    double total = 0;
    for (int j = 0; j < z.size(); ++j) {
      if (mask && !(*mask)[j]) continue;
      y[j] = std::exp(z[j] - zmax);
      total += y[j];
    }
    y /= total;
  }
  if (tape) tape->output = y;
  return y;
}

Eigen::VectorXd Mlp::log_forward(const Eigen::VectorXd& x,
                                 const std::vector<std::uint8_t>* mask) const {
  if (head_ != Head::Softmax)
    throw ContractError("Mlp: log_forward needs a softmax head");
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l)
    a = (w_[l] * a + b_[l]).array().tanh();
  Eigen::VectorXd z = w_.back() * a + b_.back();

  double zmax = kNegInf;
  for (int j = 0; j < z.size(); ++j)
    if (!mask || (*mask)[j]) zmax = std::max(zmax, z[j]);
  if (zmax == kNegInf) throw ContractError("Mlp: all outputs masked");
  double total = 0;
  for (int j = 0; j < z.size(); ++j)
    if (!mask || (*mask)[j]) total += std::exp(z[j] - zmax);
  const double logz = zmax + std::log(total);
  Eigen::VectorXd out(z.size());
  for (int j = 0; j < z.size(); ++j)
    out[j] = (!mask || (*mask)[j]) ? z[j] - logz : kNegInf;
  return out;
}

Grads Mlp::backward(const Tape& tape, const Eigen::VectorXd& dLdy) const {
  Eigen::VectorXd dLdz;
  if (head_ == Head::Linear) {
    dLdz = dLdy;
  } else {
    const Eigen::VectorXd& p = tape.output;
    const bool masked = !tape.mask.empty();
    double pdot = 0;
    for (int j = 0; j < p.size(); ++j)
      if (!masked || tape.mask[j]) pdot += p[j] * dLdy[j];
    dLdz = Eigen::VectorXd::Zero(p.size());
    for (int j = 0; j < p.size(); ++j)
      if (!masked || tape.mask[j]) dLdz[j] = p[j] * (dLdy[j] - pdot);
  }
  return backward_logits(tape, dLdz);
}

Grads Mlp::backward_logits(const Tape& tape, const Eigen::VectorXd& dLdz) const {
  Grads g = zero_grads();
  Eigen::VectorXd delta = dLdz;
  for (int l = static_cast<int>(w_.size()) - 1; l >= 0; --l) {
    const Eigen::VectorXd& in = l == 0 ? tape.input : tape.hidden[l - 1];
    g.w[l] = delta * in.transpose();
    g.b[l] = delta;
    if (l > 0) {
      const Eigen::VectorXd& h = tape.hidden[l - 1];
      delta = (w_[l].transpose() * delta).cwiseProduct(
          (1.0 - h.array().square()).matrix());
    }
  }
  return g;
}

double Mlp::grad(const Eigen::VectorXd& x, const std::vector<std::uint8_t>* mask,
                 const std::function<double(const Eigen::VectorXd&,
                                            Eigen::VectorXd&)>& loss,
                 Grads& out) const {
  Tape tape;
  const Eigen::VectorXd y = forward(x, mask, &tape);
  Eigen::VectorXd dLdy = Eigen::VectorXd::Zero(y.size());
  const double value = loss(y, dLdy);
  if (!std::isfinite(value))
    throw NumericalError("Mlp: non-finite loss " + std::to_string(value));
  out = backward(tape, dLdy);
  return value;
}

void Mlp::sgd_step(const Grads& g, double lr) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    w_[l] -= lr * g.w[l];
    b_[l] -= lr * g.b[l];
  }
}

Grads Mlp::zero_grads() const {
  Grads g;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    g.w.emplace_back(Eigen::MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    g.b.emplace_back(Eigen::VectorXd::Zero(b_[l].size()));
  }
  return g;
}

int Mlp::n_params() const {
  int n = 0;
  for (std::size_t l = 0; l < w_.size(); ++l)
    n += static_cast<int>(w_[l].size() + b_[l].size());
  return n;
}

double Mlp::param(int i) const {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (i < w_[l].size()) return w_[l](i / w_[l].cols(), i % w_[l].cols());
    i -= static_cast<int>(w_[l].size());
    if (i < b_[l].size()) return b_[l][i];
    i -= static_cast<int>(b_[l].size());
  }
  throw ContractError("Mlp: parameter index out of range");
}

void Mlp::set_param(int i, double v) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (i < w_[l].size()) {
      w_[l](i / w_[l].cols(), i % w_[l].cols()) = v;
      return;
    }
    i -= static_cast<int>(w_[l].size());
    if (i < b_[l].size()) {
      b_[l][i] = v;
      return;
    }
    i -= static_cast<int>(b_[l].size());
  }
  throw ContractError("Mlp: parameter index out of range");
}

void Mlp::save(std::ostream& os) const {
  os.precision(17);
  os << "mlp " << (head_ == Head::Linear ? "linear" : "softmax") << "\n";
  os << "sizes " << sizes_.size();
  for (int s : sizes_) os << " " << s;
  os << "\n";
  for (std::size_t l = 0; l < w_.size(); ++l) {
    os << "layer " << l << "\n";
    for (int r = 0; r < w_[l].rows(); ++r) {
      for (int c = 0; c < w_[l].cols(); ++c)
        os << (c ? " " : "") << w_[l](r, c);
      os << "\n";
    }
    for (int r = 0; r < b_[l].size(); ++r) os << (r ? " " : "") << b_[l][r];
    os << "\n";
  }
}

Mlp Mlp::load(std::istream& is) {
  std::string tag, head_name;
  if (!(is >> tag >> head_name) || tag != "mlp")
    throw DataError("Mlp: bad checkpoint header");
  Head head;
  if (head_name == "linear")
    head = Head::Linear;
  else if (head_name == "softmax")
    head = Head::Softmax;
  else
    throw DataError("Mlp: unknown head '" + head_name + "'");

  std::size_t n_sizes = 0;
  if (!(is >> tag >> n_sizes) || tag != "sizes" || n_sizes < 2)
    throw DataError("Mlp: bad sizes line");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes)
    if (!(is >> s)) throw DataError("Mlp: truncated sizes");

  Mlp net(sizes, head);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::size_t idx = 0;
    if (!(is >> tag >> idx) || tag != "layer" || idx != l)
      throw DataError("Mlp: bad layer header at layer " + std::to_string(l));
    for (int r = 0; r < net.w_[l].rows(); ++r)
      for (int c = 0; c < net.w_[l].cols(); ++c)
        if (!(is >> net.w_[l](r, c))) throw DataError("Mlp: truncated weights");
    for (int r = 0; r < net.b_[l].size(); ++r)
      if (!(is >> net.b_[l][r])) throw DataError("Mlp: truncated biases");
  }
  return net;
}

void blend_params(Mlp& target, const Mlp& source, double tau) {
  if (target.sizes() != source.sizes())
    throw ContractError("blend_params: architecture mismatch");
  for (std::size_t l = 0; l < target.weights().size(); ++l) {
    target.weights()[l] =
        tau * target.weights()[l] + (1.0 - tau) * source.weights()[l];
    target.biases()[l] =
        tau * target.biases()[l] + (1.0 - tau) * source.biases()[l];
  }
}

Grads finite_diff(const Mlp& net, const Eigen::VectorXd& x,
                  const std::vector<std::uint8_t>* mask,
                  const std::function<double(const Eigen::VectorXd&,
                                             Eigen::VectorXd&)>& loss,
                  double step) {
  Mlp probe = net;
  Grads g = net.zero_grads();
  Eigen::VectorXd scratch;
  auto eval = [&](int i, double v) {
    const double saved = probe.param(i);
    probe.set_param(i, v);
    scratch.setZero(net.sizes().back());
    const double out = loss(probe.forward(x, mask), scratch);
    probe.set_param(i, saved);
    return out;
  };
  int idx = 0;
  for (std::size_t l = 0; l < g.w.size(); ++l) {
    for (int r = 0; r < g.w[l].rows(); ++r)
      for (int c = 0; c < g.w[l].cols(); ++c) {
        const double p = net.param(idx);
        g.w[l](r, c) = (eval(idx, p + step) - eval(idx, p - step)) / (2 * step);
        ++idx;
      }
    for (int r = 0; r < g.b[l].size(); ++r) {
      const double p = net.param(idx);
      g.b[l][r] = (eval(idx, p + step) - eval(idx, p - step)) / (2 * step);
      ++idx;
    }
  }
  return g;
}

double max_grad_rel_error(const Grads& analytic, const Grads& numeric) {
  double worst = 0;
  auto visit = [&](double a, double n) {
    const double denom = std::max({1e-8, std::abs(a), std::abs(n)});
    worst = std::max(worst, std::abs(a - n) / denom);
  };
  for (std::size_t l = 0; l < analytic.w.size(); ++l) {
    for (int r = 0; r < analytic.w[l].rows(); ++r)
      for (int c = 0; c < analytic.w[l].cols(); ++c)
        visit(analytic.w[l](r, c), numeric.w[l](r, c));
    for (int r = 0; r < analytic.b[l].size(); ++r)
      visit(analytic.b[l][r], numeric.b[l][r]);
  }
  return worst;
}

}  // namespace chinv::nn
