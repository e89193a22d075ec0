#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "chinv/field.hpp"
#include "chinv/mcmc.hpp"
#include "chinv/nn.hpp"
#include "chinv/rng.hpp"

namespace chinv::rl {

struct Transition {
  field::GlobalState s;
  double r = 0;
  field::GlobalState s_next;
  int mover = -1;  // channel that changed; -1 for identity transitions
};

/// FIFO store of (s, r, s') transitions; rejects anything that changes more
/// than one channel.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const field::GlobalState& s, double r,
            const field::GlobalState& s_next);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// Uniform-with-replacement indices among transitions where agent l moved;
  /// empty result when none exist yet.
  std::vector<std::size_t> sample_moves(int agent, int count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct RlHyper {
  double gamma = 0.9;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  int batch = 32;
  double tau_target = 0.99;  // target-network retention per update
  double c1 = 1.0;
  double c2 = 0.0;
  double p_rl = 0.7;  // policy share of the proposal mixture
  int buffer_capacity = 10000;
  int buffer_init = 500;  // random transitions seeded before training
  int max_traj = 1000;    // outer steps of the training loop
  int retry_cap = 50;     // MH retries per agent turn before declaring a stall
  int hidden = 32;
  bool critic_local = false;  // ablation: critic sees only its own channel

  bool operator==(const RlHyper&) const = default;
};

void validate(const RlHyper& h);

/// Per-agent policy + critic + target critic with a shared replay buffer.
/// Policies are decentralized (own channel only, 4 inputs); the critic is
/// centralized (all channels, queried agent first).
class AgentBundle {
 public:
  AgentBundle(int n_agents, int fine_n, std::vector<field::ActionId> allowed,
              RlHyper hyper, Rng& init_rng);

  int n_agents() const { return n_agents_; }
  int fine_n() const { return fine_n_; }
  const RlHyper& hyper() const { return hyper_; }
  const std::vector<field::ActionId>& allowed() const { return allowed_; }

  nn::Mlp& policy(int l) { return policy_[l]; }
  nn::Mlp& critic(int l) { return critic_[l]; }
  nn::Mlp& target_critic(int l) { return target_[l]; }
  const nn::Mlp& policy(int l) const { return policy_[l]; }
  const nn::Mlp& critic(int l) const { return critic_[l]; }
  const nn::Mlp& target_critic(int l) const { return target_[l]; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  Eigen::VectorXd policy_input(const field::GlobalState& s, int l) const;
  Eigen::VectorXd critic_input(const field::GlobalState& s, int l) const;

  /// 1 for actions that are both allowed and feasible at channel l.
  std::vector<std::uint8_t> action_mask(const field::GlobalState& s, int l) const;

  /// Masked policy probabilities over the 8 actions (zeros at masked ones).
  Eigen::VectorXd policy_probs(const field::GlobalState& s, int l) const;

  /// p_rl * pi(a|s_l) + (1 - p_rl) / |feasible|; 0 for masked actions.
  double mixture_density(const field::GlobalState& s, int l, field::ActionId a,
                         double p_rl) const;

 private:
  int n_agents_;
  int fine_n_;
  std::vector<field::ActionId> allowed_;
  RlHyper hyper_;
  std::vector<nn::Mlp> policy_, critic_, target_;
  ReplayBuffer buffer_;
};

/// ||F - F_L(s)|| - c1 ||F - F_L(s')|| + c2 on the coarsest level.
double reward(mcmc::PosteriorLevel& coarse, const field::GlobalState& s,
              const field::GlobalState& s_next, double c1, double c2);

struct ProposedMove {
  field::GlobalState state;
  field::ActionId action;
  double logq_fwd = mcmc::kNegInf;
  double logq_rev = mcmc::kNegInf;  // density of the inverse move from state
};

/// One draw from the epsilon-greedy mixture for agent l. Sampled in a single
/// categorical draw over mixture weights scaled so that a uniform policy
/// reproduces the plain random-walk draw bit for bit. p_rl = 1 is the pure
/// policy proposal.
ProposedMove mixed_propose(AgentBundle& agents, const field::GlobalState& s,
                           int l, double p_rl, Rng& rng);

inline ProposedMove rl_propose(AgentBundle& agents, const field::GlobalState& s,
                               int l, Rng& rng) {
  return mixed_propose(agents, s, l, 1.0, rng);
}

/// The mixture as an MH proposal for a fixed agent; densities are the true
/// mixture densities in both directions.
class MixedProposal : public mcmc::ProposalGenerator {
 public:
  MixedProposal(AgentBundle* agents, int agent, double p_rl);

  mcmc::ProposalSample sample(const field::GlobalState& s, Rng& rng) override;
  double logdensity(const field::GlobalState& from,
                    const field::GlobalState& to) override;

 private:
  AgentBundle* agents_;
  int agent_;
  double p_rl_;
};

/// Mean critic MSE against r + gamma * target(s') over the batch; grads of
/// the critic parameters accumulate into *out when given.
double critic_batch_loss(AgentBundle& agents, int l,
                         std::span<const std::size_t> batch,
                         nn::Grads* out = nullptr);

/// Mean -A log pi over the batch with A = r + gamma V(s') - V(s) held
/// constant; grads of the policy parameters accumulate into *out when given.
double actor_batch_loss(AgentBundle& agents, int l,
                        std::span<const std::size_t> batch,
                        nn::Grads* out = nullptr);

/// One SGD step on the critic MSE against r + gamma * target(s'); returns the
/// pre-step loss.
double critic_update(AgentBundle& agents, int l,
                     std::span<const std::size_t> batch);

/// One SGD step on -A log pi with A = r + gamma V(s') - V(s) (current critic,
/// no gradient through A); returns the pre-step loss.
double actor_update(AgentBundle& agents, int l,
                    std::span<const std::size_t> batch);

/// target <- tau * target + (1 - tau) * critic.
void soft_update(AgentBundle& agents, int l, double tau_target);

/// Seeds the buffer with uniformly random transitions; coordinates that the
/// allowed action set cannot reach stay at the reference state's values.
void init_buffer(AgentBundle& agents, mcmc::PosteriorLevel& coarse,
                 const field::GlobalState& reference, int n_random, Rng& rng);

}  // namespace chinv::rl
