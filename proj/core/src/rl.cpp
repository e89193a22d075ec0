#include "chinv/rl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ContractError("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(const field::GlobalState& s, double r,
                        const field::GlobalState& s_next) {
  if (s.channels.size() != s_next.channels.size())
    throw ContractError("ReplayBuffer: channel counts differ");
  int mover = -1;
  for (std::size_t i = 0; i < s.channels.size(); ++i) {
    if (s.channels[i] == s_next.channels[i]) continue;
    if (mover >= 0)
      throw ContractError("ReplayBuffer: transition changes more than one channel");
    mover = static_cast<int>(i);
  }
  items_.push_back(Transition{s, r, s_next, mover});
  if (items_.size() > capacity_) items_.pop_front();
}

std::vector<std::size_t> ReplayBuffer::sample_moves(int agent, int count,
                                                    Rng& rng) const {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].mover == agent) pool.push_back(i);
  std::vector<std::size_t> out;
  if (pool.empty()) return out;
  out.reserve(count);
  for (int j = 0; j < count; ++j)
    out.push_back(pool[uniform_int(static_cast<int>(pool.size()), rng)]);
  return out;
}

void validate(const RlHyper& h) {
  if (!(h.gamma >= 0 && h.gamma < 1))
    throw ContractError("RlHyper: gamma must be in [0, 1)");
  if (!(h.lr_actor > 0) || !(h.lr_critic > 0))
    throw ContractError("RlHyper: learning rates must be positive");
  if (h.batch < 1) throw ContractError("RlHyper: batch must be >= 1");
  if (!(h.tau_target >= 0 && h.tau_target <= 1))
    throw ContractError("RlHyper: tau_target must be in [0, 1]");
  if (!(h.p_rl >= 0 && h.p_rl <= 1))
    throw ContractError("RlHyper: p_rl must be in [0, 1]");
  if (h.buffer_capacity < 1)
    throw ContractError("RlHyper: buffer_capacity must be >= 1");
  if (h.buffer_init < 0)
    throw ContractError("RlHyper: buffer_init must be >= 0");
  if (h.max_traj < 0) throw ContractError("RlHyper: max_traj must be >= 0");
  if (h.retry_cap < 1) throw ContractError("RlHyper: retry_cap must be >= 1");
  if (h.hidden < 1) throw ContractError("RlHyper: hidden width must be >= 1");
}

AgentBundle::AgentBundle(int n_agents, int fine_n,
                         std::vector<field::ActionId> allowed, RlHyper hyper,
                         Rng& init_rng)
    : n_agents_(n_agents), fine_n_(fine_n), allowed_(std::move(allowed)),
      hyper_(hyper), buffer_(hyper.buffer_capacity) {
  if (n_agents_ < 1) throw ContractError("AgentBundle: need >= 1 agent");
  if (allowed_.empty()) throw ContractError("AgentBundle: empty action set");
  validate(hyper_);
  const int critic_in = hyper_.critic_local ? 4 : 4 * n_agents_;
  for (int l = 0; l < n_agents_; ++l) {
    policy_.emplace_back(std::vector<int>{4, hyper_.hidden, field::kNumActions},
                         nn::Head::Softmax);
    policy_.back().init_uniform(init_rng, /*zero_final=*/true);
    critic_.emplace_back(std::vector<int>{critic_in, hyper_.hidden, 1},
                         nn::Head::Linear);
    critic_.back().init_uniform(init_rng);
    target_.push_back(critic_.back());
  }
}

Eigen::VectorXd AgentBundle::policy_input(const field::GlobalState& s,
                                          int l) const {
  const field::ChannelRect& c = s.channels.at(l);
  Eigen::VectorXd x(4);
  const double n = fine_n_;
  x << c.x / n, c.y / n, c.w / n, c.d / n;
  return x;
}

Eigen::VectorXd AgentBundle::critic_input(const field::GlobalState& s,
                                          int l) const {
  if (hyper_.critic_local) return policy_input(s, l);
  Eigen::VectorXd x(4 * n_agents_);
  x.segment(0, 4) = policy_input(s, l);
  int at = 4;
  for (int j = 0; j < n_agents_; ++j) {
    if (j == l) continue;
    x.segment(at, 4) = policy_input(s, j);
    at += 4;
  }
  return x;
}

std::vector<std::uint8_t> AgentBundle::action_mask(const field::GlobalState& s,
                                                   int l) const {
  std::vector<std::uint8_t> mask(field::kNumActions, 0);
  for (field::ActionId a : allowed_)
    if (field::action_feasible(s.channels.at(l), a, fine_n_))
      mask[static_cast<int>(a)] = 1;
  return mask;
}

Eigen::VectorXd AgentBundle::policy_probs(const field::GlobalState& s,
                                          int l) const {
  const std::vector<std::uint8_t> mask = action_mask(s, l);
  return policy_[l].forward(policy_input(s, l), &mask);
}

double AgentBundle::mixture_density(const field::GlobalState& s, int l,
                                    field::ActionId a, double p_rl) const {
  const std::vector<std::uint8_t> mask = action_mask(s, l);
  if (!mask[static_cast<int>(a)]) return 0.0;
  const int k = static_cast<int>(
      std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  const Eigen::VectorXd probs = policy_[l].forward(policy_input(s, l), &mask);
  return p_rl * probs[static_cast<int>(a)] + (1.0 - p_rl) * (1.0 / k);
}

double reward(mcmc::PosteriorLevel& coarse, const field::GlobalState& s,
              const field::GlobalState& s_next, double c1, double c2) {
  return coarse.misfit_of(s) - c1 * coarse.misfit_of(s_next) + c2;
}

ProposedMove mixed_propose(AgentBundle& agents, const field::GlobalState& s,
                           int l, double p_rl, Rng& rng) {
  const std::vector<std::uint8_t> mask = agents.action_mask(s, l);
  std::vector<field::ActionId> feas;
  for (int a = 0; a < field::kNumActions; ++a)
    if (mask[a]) feas.push_back(static_cast<field::ActionId>(a));
  if (feas.empty())
    throw ContractError("mixed_propose: agent " + std::to_string(l) +
                        " has no feasible action");
  const int k = static_cast<int>(feas.size());
  const Eigen::VectorXd probs =
      agents.policy(l).forward(agents.policy_input(s, l), &mask);

  // Weights are scaled by k relative to the densities: a uniform policy gives
  // weight exactly 1 per action, the same draw the plain walk makes.
  std::vector<double> w(feas.size());
  for (std::size_t j = 0; j < feas.size(); ++j)
    w[j] = p_rl * (k * probs[static_cast<int>(feas[j])]) + (1.0 - p_rl);
  const field::ActionId act = feas[sample_index(w, rng)];

  ProposedMove out;
  out.action = act;
  out.state = s;
  out.state.channels[l] =
      field::apply_action(s.channels[l], act, agents.fine_n());
  out.logq_fwd = std::log(p_rl * probs[static_cast<int>(act)] + (1.0 - p_rl) / k);
  out.logq_rev = std::log(agents.mixture_density(
      out.state, l, field::inverse_action(act), p_rl));
  return out;
}

MixedProposal::MixedProposal(AgentBundle* agents, int agent, double p_rl)
    : agents_(agents), agent_(agent), p_rl_(p_rl) {
  if (agent_ < 0 || agent_ >= agents_->n_agents())
    throw ContractError("MixedProposal: agent index out of range");
  if (!(p_rl_ >= 0 && p_rl_ <= 1))
    throw ContractError("MixedProposal: p_rl must be in [0, 1]");
}

mcmc::ProposalSample MixedProposal::sample(const field::GlobalState& s,
                                           Rng& rng) {
  const ProposedMove move = mixed_propose(*agents_, s, agent_, p_rl_, rng);
  return mcmc::ProposalSample{move.state, move.logq_fwd};
}

double MixedProposal::logdensity(const field::GlobalState& from,
                                 const field::GlobalState& to) {
  const auto move = field::single_move(from, to);
  if (!move || move->first != agent_) return mcmc::kNegInf;
  const double q = agents_->mixture_density(from, agent_, move->second, p_rl_);
  return q > 0 ? std::log(q) : mcmc::kNegInf;
}

double critic_batch_loss(AgentBundle& agents, int l,
                         std::span<const std::size_t> batch, nn::Grads* out) {
  const RlHyper& h = agents.hyper();
  if (batch.empty()) throw ContractError("critic loss needs a non-empty batch");
  nn::Mlp& critic = agents.critic(l);
  nn::Mlp& target = agents.target_critic(l);
  const double inv_s = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  for (std::size_t idx : batch) {
    const Transition& t = agents.buffer()[idx];
    const double v_next =
        target.forward(agents.critic_input(t.s_next, l))[0];
    const double tar = t.r + h.gamma * v_next;
    nn::Tape tape;
    const double v = critic.forward(agents.critic_input(t.s, l), nullptr, &tape)[0];
    const double err = v - tar;
    loss += err * err * inv_s;
    if (out) {
      Eigen::VectorXd dLdy(1);
      dLdy[0] = 2.0 * err * inv_s;
      out->add(critic.backward(tape, dLdy));
    }
  }
  return loss;
}

double actor_batch_loss(AgentBundle& agents, int l,
                        std::span<const std::size_t> batch, nn::Grads* out) {
  const RlHyper& h = agents.hyper();
  if (batch.empty()) throw ContractError("actor loss needs a non-empty batch");
  nn::Mlp& policy = agents.policy(l);
  nn::Mlp& critic = agents.critic(l);
  const double inv_s = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  for (std::size_t idx : batch) {
    const Transition& t = agents.buffer()[idx];
    const auto move = field::single_move(t.s, t.s_next);
    if (!move || move->first != l)
      throw DataError("actor loss: transition is not an agent-" +
                      std::to_string(l) + " move");
    const int act = static_cast<int>(move->second);

    const double adv = t.r +
                       h.gamma * critic.forward(agents.critic_input(t.s_next, l))[0] -
                       critic.forward(agents.critic_input(t.s, l))[0];

    const std::vector<std::uint8_t> mask = agents.action_mask(t.s, l);
    nn::Tape tape;
    const Eigen::VectorXd probs =
        policy.forward(agents.policy_input(t.s, l), &mask, &tape);
    const Eigen::VectorXd logp =
        policy.log_forward(agents.policy_input(t.s, l), &mask);
    // A replayed action the policy has since abandoned can underflow to
    // log 0; the logit gradient A (p - e_a) stays bounded, so only the
    // reported value needs the floor.
    loss += -adv * std::max(logp[act], -745.0) * inv_s;

    if (out) {
      // d(-A log p_a)/dz = A (p - e_a) on the unmasked entries.
      Eigen::VectorXd dLdz = Eigen::VectorXd::Zero(field::kNumActions);
      for (int a = 0; a < field::kNumActions; ++a)
        if (mask[a]) dLdz[a] = adv * probs[a] * inv_s;
      dLdz[act] -= adv * inv_s;
      out->add(policy.backward_logits(tape, dLdz));
    }
  }
  if (!std::isfinite(loss)) throw NumericalError("actor loss is non-finite");
  return loss;
}

double critic_update(AgentBundle& agents, int l,
                     std::span<const std::size_t> batch) {
  const RlHyper& h = agents.hyper();
  if (static_cast<int>(batch.size()) < h.batch)
    throw ContractError("critic_update: batch of " +
                        std::to_string(batch.size()) + " < configured " +
                        std::to_string(h.batch));
  nn::Grads grads = agents.critic(l).zero_grads();
  const double loss = critic_batch_loss(agents, l, batch, &grads);
  agents.critic(l).sgd_step(grads, h.lr_critic);
  return loss;
}

double actor_update(AgentBundle& agents, int l,
                    std::span<const std::size_t> batch) {
  const RlHyper& h = agents.hyper();
  if (static_cast<int>(batch.size()) < h.batch)
    throw ContractError("actor_update: batch of " + std::to_string(batch.size()) +
                        " < configured " + std::to_string(h.batch));
  nn::Grads grads = agents.policy(l).zero_grads();
  const double loss = actor_batch_loss(agents, l, batch, &grads);
  agents.policy(l).sgd_step(grads, h.lr_actor);
  return loss;
}

void soft_update(AgentBundle& agents, int l, double tau_target) {
  if (!(tau_target >= 0 && tau_target <= 1))
    throw ContractError("soft_update: tau_target must be in [0, 1]");
  nn::blend_params(agents.target_critic(l), agents.critic(l), tau_target);
}

void init_buffer(AgentBundle& agents, mcmc::PosteriorLevel& coarse,
                 const field::GlobalState& reference, int n_random, Rng& rng) {
  if (static_cast<int>(reference.channels.size()) != agents.n_agents())
    throw ContractError("init_buffer: reference state has wrong channel count");
  const int n = agents.fine_n();
  field::validate_state(reference, n);

  bool free_x = false, free_y = false, free_w = false, free_d = false;
  for (field::ActionId a : agents.allowed()) {
    using A = field::ActionId;
    free_x |= a == A::ShiftLeft || a == A::ShiftRight;
    free_y |= a == A::ShiftDown || a == A::ShiftUp;
    free_w |= a == A::SqueezeH || a == A::StretchH;
    free_d |= a == A::SqueezeV || a == A::StretchV;
  }

  for (int i = 0; i < n_random; ++i) {
    field::GlobalState s = reference;
    for (auto& c : s.channels) {
      if (free_w) c.w = 1 + uniform_int(free_x ? n : n - c.x, rng);
      if (free_d) c.d = 1 + uniform_int(free_y ? n : n - c.y, rng);
      if (free_x) c.x = uniform_int(n - c.w + 1, rng);
      if (free_y) c.y = uniform_int(n - c.d + 1, rng);
    }
    const int mover = agents.n_agents() == 1
                          ? 0
                          : uniform_int(agents.n_agents(), rng);
    const std::vector<field::ActionId> feas =
        field::feasible_actions(s.channels[mover], n, agents.allowed());
    if (feas.empty()) continue;
    const field::ActionId act = feas[uniform_int(static_cast<int>(feas.size()), rng)];
    field::GlobalState s_next = s;
    s_next.channels[mover] = field::apply_action(s.channels[mover], act, n);
    const double r = reward(coarse, s, s_next, agents.hyper().c1, agents.hyper().c2);
    agents.buffer().push(s, r, s_next);
  }
}

}  // namespace chinv::rl
