#include "chinv/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/mcmc.hpp"
#include "chinv/mesh.hpp"
#include "chinv/rl.hpp"
#include "chinv/rng.hpp"

namespace chinv::diag {

namespace {

std::vector<double> flatten(const nn::Grads& g) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.w.size(); ++l) {
    for (Eigen::Index r = 0; r < g.w[l].rows(); ++r)
      for (Eigen::Index c = 0; c < g.w[l].cols(); ++c)
        flat.push_back(g.w[l](r, c));
    for (Eigen::Index i = 0; i < g.b[l].size(); ++i) flat.push_back(g.b[l][i]);
  }
  return flat;
}

double check_against_fd(rl::AgentBundle& agents, int l,
                        std::span<const std::size_t> batch, bool actor,
                        double h) {
  auto loss_of = [&] {
    return actor ? rl::actor_batch_loss(agents, l, batch)
                 : rl::critic_batch_loss(agents, l, batch);
  };
  nn::Mlp& net = actor ? agents.policy(l) : agents.critic(l);
  nn::Grads g = net.zero_grads();
  if (actor)
    rl::actor_batch_loss(agents, l, batch, &g);
  else
    rl::critic_batch_loss(agents, l, batch, &g);
  const std::vector<double> analytic = flatten(g);

  double worst = 0;
  for (int i = 0; i < net.n_params(); ++i) {
    const double p0 = net.param(i);
    net.set_param(i, p0 + h);
    const double lp = loss_of();
    net.set_param(i, p0 - h);
    const double lm = loss_of();
    net.set_param(i, p0);
    const double fd = (lp - lm) / (2 * h);
    const double a = analytic[static_cast<std::size_t>(i)];
    worst = std::max(worst, std::abs(a - fd) /
                                std::max({1e-8, std::abs(a), std::abs(fd)}));
  }
  return worst;
}

field::GlobalState random_state(int n_agents, int fine_n, Rng& rng) {
  field::GlobalState s;
  for (int i = 0; i < n_agents; ++i) {
    field::ChannelRect c;
    c.w = 1 + uniform_int(6, rng);
    c.d = 1 + uniform_int(6, rng);
    c.x = uniform_int(fine_n - c.w + 1, rng);
    c.y = uniform_int(fine_n - c.d + 1, rng);
    s.channels.push_back(c);
  }
  return s;
}

}  // namespace

MhOracle mh_stationarity_oracle(long steps, std::uint64_t seed) {
  const int fine_n = 10;
  const mesh::GridHierarchy grid = mesh::build_hierarchy(fine_n, 5);

  fem::ProblemSpec spec;
  spec.nt = 10;
  spec.source.boxes = {{0.15, 0.15, 0.35, 0.35, 10.0},
                       {0.65, 0.65, 0.85, 0.85, -10.0}};
  fem::FineSolver solver(&grid, spec);

  auto state_at = [](int x) {
    return field::GlobalState{{{x, 3, 1, 4}}};
  };
  const field::PermeabilityField target =
      field::rasterize(state_at(6), grid, 1000.0, 1.0);
  const fem::WellObservation f_obs = solver.observe(target);
  const double sigma = 0.1 * f_obs.values.norm();

  mcmc::PosteriorLevel level(
      &grid,
      [&solver](const field::PermeabilityField& k)
          -> const fem::WellObservation& { return solver.observe(k); },
      f_obs, sigma);
  mcmc::PosteriorLevel* level_ptr = &level;
  const std::span<mcmc::PosteriorLevel* const> levels(&level_ptr, 1);

  MhOracle res;
  res.steps = steps;

  const int n_states = fine_n;  // unit width: x in 0..fine_n-1
  res.exact.resize(n_states);
  double zsum = 0;
  std::vector<double> logp(n_states);
  double lmax = mcmc::kNegInf;
  for (int x = 0; x < n_states; ++x) {
    logp[x] = level.log_density(state_at(x));
    lmax = std::max(lmax, logp[x]);
  }
  for (int x = 0; x < n_states; ++x) {
    res.exact[x] = std::exp(logp[x] - lmax);
    zsum += res.exact[x];
  }
  for (double& p : res.exact) p /= zsum;

  const std::vector<field::ActionId> lr{field::ActionId::ShiftLeft,
                                        field::ActionId::ShiftRight};
  mcmc::UniformProposal q(fine_n, lr);
  Rng rng(mix_seed(seed, 0));
  field::GlobalState s = state_at(6);
  std::vector<long> counts(n_states, 0);
  for (long i = 0; i < steps; ++i) {
    const mcmc::StepOutcome out = mcmc::mlmcmc_step(s, q, levels, rng);
    if (out.accepted) s = out.next;
    ++counts[s.channels[0].x];
  }
  res.empirical.resize(n_states);
  double tv = 0;
  for (int x = 0; x < n_states; ++x) {
    res.empirical[x] = static_cast<double>(counts[x]) / static_cast<double>(steps);
    tv += std::abs(res.empirical[x] - res.exact[x]);
  }
  res.tv = 0.5 * tv;
  return res;
}

double gradcheck_max_rel_error(int trials, std::uint64_t seed, double fd_step) {
  Rng rng(seed);
  const int fine_n = 40;
  const std::vector<field::ActionId> allowed{field::all_actions().begin(),
                                             field::all_actions().end()};
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    const int n_agents = 1 + uniform_int(3, rng);
    rl::RlHyper h;
    h.batch = 4;
    h.hidden = 8 + 8 * uniform_int(2, rng);
    h.buffer_capacity = 64;
    rl::AgentBundle agents(n_agents, fine_n, allowed, h, rng);
    const int l = uniform_int(n_agents, rng);
    // A zero-initialized softmax head is a stationary point; move off it.
    agents.policy(l).init_uniform(rng, false);

    std::vector<std::size_t> batch;
    for (int b = 0; b < h.batch; ++b) {
      const field::GlobalState s = random_state(n_agents, fine_n, rng);
      const std::vector<field::ActionId> feas =
          field::feasible_actions(s.channels[l], fine_n, allowed);
      field::GlobalState nxt = s;
      nxt.channels[l] = field::apply_action(
          s.channels[l], feas[uniform_int(static_cast<int>(feas.size()), rng)],
          fine_n);
      agents.buffer().push(s, 2 * uniform01(rng) - 1, nxt);
      batch.push_back(static_cast<std::size_t>(b));
    }
    worst = std::max(worst, check_against_fd(agents, l, batch, true, fd_step));
    worst = std::max(worst, check_against_fd(agents, l, batch, false, fd_step));
  }
  return worst;
}

}  // namespace chinv::diag
