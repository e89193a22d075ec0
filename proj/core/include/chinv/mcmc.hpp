#pragma once

#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/mesh.hpp"
#include "chinv/rng.hpp"

namespace chinv::mcmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// One level of the likelihood hierarchy: a forward model plus the target
/// observation. Log-density is -(misfit/sigma_f)^2 under a flat prior,
/// memoized per state across steps.
class PosteriorLevel {
 public:
  using ForwardFn =
      std::function<const fem::WellObservation&(const field::PermeabilityField&)>;

  PosteriorLevel(const mesh::GridHierarchy* g, ForwardFn forward,
                 fem::WellObservation f_obs, double sigma_f,
                 double contrast = 1000.0, double background = 1.0);

  double misfit_of(const field::GlobalState& s);
  double log_density(const field::GlobalState& s);

  /// Memo misses, i.e. forward-model invocations attributable to this level.
  long fresh_evals() const { return fresh_evals_; }
  double sigma_f() const { return sigma_f_; }
  int fine_n() const;
  const fem::WellObservation& f_obs() const { return f_obs_; }

 private:
  const mesh::GridHierarchy* grid_;
  ForwardFn forward_;
  fem::WellObservation f_obs_;
  double sigma_f_;
  double contrast_, background_;
  std::unordered_map<field::GlobalState, double, field::StateHash> misfit_memo_;
  long fresh_evals_ = 0;
};

struct ProposalSample {
  field::GlobalState state;
  double logq_fwd = kNegInf;
};

/// Proposal over lattice states. logdensity(from, to) must be normalized over
/// the feasible single-agent moves of `from`; the reverse density of a sample
/// is logdensity(proposed, original).
class ProposalGenerator {
 public:
  virtual ~ProposalGenerator() = default;
  virtual ProposalSample sample(const field::GlobalState& s, Rng& rng) = 0;
  virtual double logdensity(const field::GlobalState& from,
                            const field::GlobalState& to) = 0;
};

/// Agent chosen uniformly, then one of its feasible actions uniformly.
class UniformProposal : public ProposalGenerator {
 public:
  explicit UniformProposal(int fine_n,
                           std::vector<field::ActionId> allowed =
                               {field::all_actions().begin(),
                                field::all_actions().end()});

  ProposalSample sample(const field::GlobalState& s, Rng& rng) override;
  double logdensity(const field::GlobalState& from,
                    const field::GlobalState& to) override;

 private:
  int fine_n_;
  std::vector<field::ActionId> allowed_;
};

struct StepOutcome {
  bool accepted = false;
  field::GlobalState next;
  field::GlobalState proposal;  // what was drawn, kept even on rejection
  int level_reached = 0;  // rejection stage, or levels.size() when accepted
  std::vector<double> rho;            // one entry per evaluated stage
  std::vector<long> evals_per_level;  // fresh forward evaluations this step
};

/// First-stage ratio min{1, Pi0(c) q(s|c) / (Pi0(s) q(c|s))}. A zero reverse
/// density rejects outright without touching the forward model.
double rho0(const field::GlobalState& c, const field::GlobalState& s,
            ProposalGenerator& q, PosteriorLevel& level0);

/// Promotion ratio min{1, Pi_lo(s) Pi_hi(c) / (Pi_lo(c) Pi_hi(s))}.
double rho_level(const field::GlobalState& c, const field::GlobalState& s,
                 PosteriorLevel& level_lo, PosteriorLevel& level_hi);

/// Full acceptance cascade: screen at level 0, promote level by level, exit on
/// the first rejection. Each evaluated stage consumes exactly one uniform
/// draw. An invalid proposal rejects at stage 0 with zero evaluations.
StepOutcome mlmcmc_step(const field::GlobalState& s, ProposalGenerator& q,
                        std::span<PosteriorLevel* const> levels, Rng& rng);

}  // namespace chinv::mcmc
