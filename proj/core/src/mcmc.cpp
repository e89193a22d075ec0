#include "chinv/mcmc.hpp"

#include <cmath>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::mcmc {

PosteriorLevel::PosteriorLevel(const mesh::GridHierarchy* g, ForwardFn forward,
                               fem::WellObservation f_obs, double sigma_f,
                               double contrast, double background)
    : grid_(g), forward_(std::move(forward)), f_obs_(std::move(f_obs)),
      sigma_f_(sigma_f), contrast_(contrast), background_(background) {
  if (!(sigma_f_ > 0))
    throw ContractError("PosteriorLevel: sigma_f must be positive, got " +
                        std::to_string(sigma_f_));
}

int PosteriorLevel::fine_n() const { return grid_->fine_n(); }

double PosteriorLevel::misfit_of(const field::GlobalState& s) {
  auto it = misfit_memo_.find(s);
  if (it != misfit_memo_.end()) return it->second;
  const field::PermeabilityField kappa =
      field::rasterize(s, *grid_, contrast_, background_);
  ++fresh_evals_;
  const double m = fem::misfit(f_obs_, forward_(kappa));
  misfit_memo_.emplace(s, m);
  return m;
}

double PosteriorLevel::log_density(const field::GlobalState& s) {
  const double m = misfit_of(s) / sigma_f_;
  return -m * m;
}

UniformProposal::UniformProposal(int fine_n, std::vector<field::ActionId> allowed)
    : fine_n_(fine_n), allowed_(std::move(allowed)) {
  if (allowed_.empty())
    throw ContractError("UniformProposal: empty action set");
}

ProposalSample UniformProposal::sample(const field::GlobalState& s, Rng& rng) {
  const int n = static_cast<int>(s.channels.size());
  if (n == 0) throw ContractError("UniformProposal: state has no channels");
  int agent = 0;
  if (n > 1) {
    const std::vector<double> w(n, 1.0);
    agent = sample_index(w, rng);
  }
  const std::vector<field::ActionId> feas =
      field::feasible_actions(s.channels[agent], fine_n_, allowed_);
  if (feas.empty())
    throw ContractError("UniformProposal: agent " + std::to_string(agent) +
                        " has no feasible action");
  const std::vector<double> w(feas.size(), 1.0);
  const field::ActionId act = feas[sample_index(w, rng)];

  ProposalSample out;
  out.state = s;
  out.state.channels[agent] =
      field::apply_action(s.channels[agent], act, fine_n_);
  out.logq_fwd = -std::log(static_cast<double>(n) * feas.size());
  return out;
}

double UniformProposal::logdensity(const field::GlobalState& from,
                                   const field::GlobalState& to) {
  const auto move = field::single_move(from, to);
  if (!move) return kNegInf;
  const auto [agent, act] = *move;
  bool in_set = false;
  for (field::ActionId a : allowed_) in_set = in_set || (a == act);
  if (!in_set) return kNegInf;
  const std::vector<field::ActionId> feas =
      field::feasible_actions(from.channels[agent], fine_n_, allowed_);
  return -std::log(static_cast<double>(from.channels.size()) * feas.size());
}

double rho0(const field::GlobalState& c, const field::GlobalState& s,
            ProposalGenerator& q, PosteriorLevel& level0) {
  const double logq_rev = q.logdensity(c, s);
  if (logq_rev == kNegInf) return 0.0;
  const double logq_fwd = q.logdensity(s, c);
  const double log_rho =
      level0.log_density(c) + logq_rev - level0.log_density(s) - logq_fwd;
  return std::min(1.0, std::exp(log_rho));
}

double rho_level(const field::GlobalState& c, const field::GlobalState& s,
                 PosteriorLevel& level_lo, PosteriorLevel& level_hi) {
  const double log_rho = level_lo.log_density(s) + level_hi.log_density(c) -
                         level_lo.log_density(c) - level_hi.log_density(s);
  return std::min(1.0, std::exp(log_rho));
}

StepOutcome mlmcmc_step(const field::GlobalState& s, ProposalGenerator& q,
                        std::span<PosteriorLevel* const> levels, Rng& rng) {
  if (levels.empty()) throw ContractError("mlmcmc_step: need at least one level");

  StepOutcome out;
  out.next = s;
  out.evals_per_level.assign(levels.size(), 0);

  std::vector<long> base(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l)
    base[l] = levels[l]->fresh_evals();
  auto settle = [&] {
    for (std::size_t l = 0; l < levels.size(); ++l)
      out.evals_per_level[l] = levels[l]->fresh_evals() - base[l];
  };

  const ProposalSample ps = q.sample(s, rng);
  out.proposal = ps.state;

  bool valid = true;
  try {
    field::validate_state(ps.state, levels[0]->fine_n());
  } catch (const StateError&) {
    valid = false;
  }

  for (std::size_t stage = 0; stage < levels.size(); ++stage) {
    double rho;
    if (stage == 0)
      rho = valid ? rho0(ps.state, s, q, *levels[0]) : 0.0;
    else
      rho = rho_level(ps.state, s, *levels[stage - 1], *levels[stage]);
    out.rho.push_back(rho);
    const double u = uniform01(rng);
    if (!(rho >= 1.0 || u < rho)) {
      out.level_reached = static_cast<int>(stage);
      settle();
      return out;
    }
  }

  out.accepted = true;
  out.next = ps.state;
  out.level_reached = static_cast<int>(levels.size());
  settle();
  return out;
}

}  // namespace chinv::mcmc
