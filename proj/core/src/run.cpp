#include "chinv/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>

#include "chinv/errors.hpp"
#include "chinv/gmsfem.hpp"
#include "chinv/mcmc.hpp"
#include "chinv/mesh.hpp"
#include "chinv/rl.hpp"
#include "chinv/rng.hpp"
#include "json.hpp"

namespace chinv::run {

namespace {

namespace fs = std::filesystem;

/// Total proposal mass out of `st`: sums the generator's density over every
/// single-channel move the action set allows. Must be 1 for a proper proposal.
double proposal_mass(mcmc::ProposalGenerator& q, const field::GlobalState& st,
                     std::span<const field::ActionId> allowed, int fine_n) {
  double total = 0;
  for (std::size_t ch = 0; ch < st.channels.size(); ++ch)
    for (field::ActionId a :
         field::feasible_actions(st.channels[ch], fine_n, allowed)) {
      field::GlobalState moved = st;
      moved.channels[ch] = field::apply_action(st.channels[ch], a, fine_n);
      const double lq = q.logdensity(st, moved);
      if (std::isfinite(lq)) total += std::exp(lq);
    }
  return total;
}

void audit_step(mcmc::ProposalGenerator& q, const field::GlobalState& from,
                const field::GlobalState& to,
                std::span<const field::ActionId> allowed, int fine_n) {
  const double fwd_mass = proposal_mass(q, from, allowed, fine_n);
  if (std::abs(fwd_mass - 1.0) > 1e-9)
    throw ContractError("proposal mass at current state is " +
                        std::to_string(fwd_mass) + ", expected 1");
  if (to == from) return;
  if (!std::isfinite(q.logdensity(to, from)))
    throw ContractError("proposed move has zero reverse density");
  const double rev_mass = proposal_mass(q, to, allowed, fine_n);
  if (std::abs(rev_mass - 1.0) > 1e-9)
    throw ContractError("proposal mass at proposed state is " +
                        std::to_string(rev_mass) + ", expected 1");
}

}  // namespace

RunResult run_experiment(const config::ExperimentConfig& cfg,
                         const std::string& out_dir) {
  config::validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  auto now_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  const mesh::GridHierarchy grid =
      mesh::build_hierarchy(cfg.grid.fine_n, cfg.grid.coarse_n);
  const mesh::PartitionOfUnity pou = mesh::partition_of_unity(grid);

  fem::ProblemSpec spec;
  spec.t_final = cfg.grid.t_final;
  spec.nt = cfg.grid.nt;
  spec.source.boxes = cfg.sources;

  const field::PermeabilityField target =
      cfg.field.target_channels.empty()
          ? field::rasterize_diagonal_target(cfg.field.target_segments, grid,
                                             cfg.field.contrast,
                                             cfg.field.background)
          : field::rasterize(field::GlobalState{cfg.field.target_channels},
                             grid, cfg.field.contrast, cfg.field.background);

  fem::FineSolver fine(&grid, spec);
  const fem::WellObservation f_obs = fine.observe(target);

  const int max_li = *std::max_element(cfg.levels.begin(), cfg.levels.end());
  auto cache = std::make_shared<gmsfem::BasisCache>(&grid, &pou, max_li);
  std::vector<std::unique_ptr<gmsfem::CoarseSolver>> solvers;
  for (int li : cfg.levels)
    solvers.push_back(
        std::make_unique<gmsfem::CoarseSolver>(&grid, &pou, spec, li, cache));

  // Model error of the coarsest level at the reference state. The noise scale
  // must absorb this error, or the promotion stages veto every move the
  // screening level liked; the stopping threshold is scaled off it too.
  const field::GlobalState thr_state{cfg.threshold_channels.empty()
                                         ? cfg.field.target_channels
                                         : cfg.threshold_channels};
  const double model_err = fem::misfit(
      solvers.front()->observe(field::rasterize(
          thr_state, grid, cfg.field.contrast, cfg.field.background)),
      f_obs);
  const double sigma =
      cfg.sigma_f > 0
          ? cfg.sigma_f
          : (model_err > 0 ? model_err : 0.01 * f_obs.values.norm());

  std::vector<std::unique_ptr<mcmc::PosteriorLevel>> store;
  for (auto& sv : solvers)
    store.push_back(std::make_unique<mcmc::PosteriorLevel>(
        &grid,
        [solver = sv.get()](const field::PermeabilityField& k)
            -> const fem::WellObservation& { return solver->observe(k); },
        f_obs, sigma, cfg.field.contrast, cfg.field.background));
  store.push_back(std::make_unique<mcmc::PosteriorLevel>(
      &grid,
      [&fine](const field::PermeabilityField& k)
          -> const fem::WellObservation& { return fine.observe(k); },
      f_obs, sigma, cfg.field.contrast, cfg.field.background));
  std::vector<mcmc::PosteriorLevel*> levels;
  for (auto& p : store) levels.push_back(p.get());
  const std::span<mcmc::PosteriorLevel* const> lspan(levels);
  mcmc::PosteriorLevel& coarse0 = *levels.front();
  mcmc::PosteriorLevel& fine_level = *levels.back();

  double threshold = cfg.threshold;
  if (threshold == 0.0) threshold = 1.5 * model_err;
  const bool thr_enabled = threshold >= 0;

  Rng chain(mix_seed(cfg.seed, 0));
  Rng train(mix_seed(cfg.seed, 1));
  Rng init(mix_seed(cfg.seed, 2));

  const field::GlobalState initial{cfg.initial_channels};
  field::GlobalState s = initial;
  std::vector<trace::TraceRow> rows;
  std::vector<trace::RlUpdateRow> update_rows;
  long steps = 0, accepted = 0, stalls = 0, updates = 0;
  long steps_to_thr = -1, accepted_to_thr = -1;

  auto push_row = [&](int level_reached) {
    trace::TraceRow r;
    r.step = steps;
    r.accepted_total = accepted;
    r.misfit = fine_level.misfit_of(s);
    r.level_reached = level_reached;
    r.wall_ms = cfg.deterministic_trace ? 0.0 : now_ms();
    r.state = s;
    rows.push_back(r);
    if (thr_enabled && steps_to_thr < 0 && r.misfit <= threshold) {
      steps_to_thr = steps;
      accepted_to_thr = accepted;
    }
  };
  auto done = [&] {
    return steps >= cfg.max_steps || (thr_enabled && steps_to_thr >= 0);
  };
  push_row(static_cast<int>(levels.size()));

  const int n_agents = static_cast<int>(cfg.initial_channels.size());
  std::unique_ptr<rl::AgentBundle> agents;
  if (cfg.method != config::Method::Mcmc) {
    agents = std::make_unique<rl::AgentBundle>(
        n_agents, grid.fine_n(), cfg.allowed_actions, cfg.rl, init);
    rl::init_buffer(*agents, coarse0, initial, cfg.rl.buffer_init, init);
  }

  auto train_turn = [&](int l) {
    const std::vector<std::size_t> batch =
        agents->buffer().sample_moves(l, cfg.rl.batch, train);
    if (static_cast<int>(batch.size()) < cfg.rl.batch) return;
    trace::RlUpdateRow u;
    u.critic_loss = rl::critic_update(*agents, l, batch);
    u.actor_loss = rl::actor_update(*agents, l, batch);
    rl::soft_update(*agents, l, cfg.rl.tau_target);
    u.update = ++updates;
    u.agent = l;
    const Eigen::VectorXd probe = agents->policy_probs(initial, l);
    u.probe_probs.assign(probe.data(), probe.data() + probe.size());
    update_rows.push_back(u);
  };

  auto fill_meta = [&] {
    trace::RunMeta m;
    m.experiment = cfg.experiment;
    m.method = config::method_name(cfg.method);
    m.seed = cfg.seed;
    m.steps_total = steps;
    m.accepted_total = accepted;
    m.final_misfit = fine_level.misfit_of(s);
    m.threshold = threshold;
    m.sigma_f = sigma;
    m.steps_to_threshold = steps_to_thr;
    m.accepted_to_threshold = accepted_to_thr;
    m.stalls = stalls;
    m.updates_total = updates;
    m.wall_ms_total = now_ms();
    m.final_state = trace::state_to_string(s);
    return m;
  };

  auto flush = [&] {
    if (out_dir.empty()) return;
    const fs::path dir(out_dir);
    fs::create_directories(dir / "checkpoints");
    {
      std::ofstream out(dir / "config.json");
      if (!out) throw IoError("cannot write config echo under '" + out_dir + "'");
      out << config::serialize_config(cfg);
    }
    trace::write_trace_csv((dir / "trace.csv").string(), rows);
    trace::write_meta_json((dir / "meta.json").string(), fill_meta());
    {
      nlohmann::json j;
      j["state"] = trace::state_to_string(s);
      j["misfit"] = fine_level.misfit_of(s);
      j["threshold"] = threshold;
      std::ofstream out(dir / "final_state.json");
      out << j.dump(2) << "\n";
    }
    if (agents) {
      trace::write_rl_updates_csv((dir / "rl_updates.csv").string(),
                                  update_rows);
      for (int l = 0; l < n_agents; ++l) {
        const std::string tag = std::to_string(l);
        std::ofstream p(dir / "checkpoints" / ("policy_" + tag + ".txt"));
        agents->policy(l).save(p);
        std::ofstream c(dir / "checkpoints" / ("critic_" + tag + ".txt"));
        agents->critic(l).save(c);
        std::ofstream t(dir / "checkpoints" / ("target_" + tag + ".txt"));
        agents->target_critic(l).save(t);
      }
      std::ofstream buf(dir / "buffer.txt");
      for (std::size_t i = 0; i < agents->buffer().size(); ++i) {
        const rl::Transition& tr = agents->buffer()[i];
        buf << trace::state_to_string(tr.s) << ' ' << tr.r << ' '
            << trace::state_to_string(tr.s_next) << ' ' << tr.mover << "\n";
      }
    }
  };

  try {
    if (cfg.method == config::Method::Mcmc) {
      mcmc::UniformProposal q(grid.fine_n(), cfg.allowed_actions);
      while (!done()) {
        const field::GlobalState before = s;
        const mcmc::StepOutcome out = mcmc::mlmcmc_step(s, q, lspan, chain);
        ++steps;
        if (out.accepted) {
          s = out.next;
          ++accepted;
        }
        push_row(out.level_reached);
        if (cfg.audit_proposals)
          audit_step(q, before, out.proposal, cfg.allowed_actions,
                     grid.fine_n());
      }
    } else if (cfg.pure_rl) {
      for (int t = 0; t < cfg.rl.max_traj && !done(); ++t)
        for (int l = 0; l < n_agents && !done(); ++l) {
          const rl::ProposedMove mv = rl::rl_propose(*agents, s, l, chain);
          agents->buffer().push(
              s, rl::reward(coarse0, s, mv.state, cfg.rl.c1, cfg.rl.c2),
              mv.state);
          s = mv.state;
          ++steps;
          ++accepted;
          push_row(static_cast<int>(levels.size()));
          train_turn(l);
        }
    } else {
      const double p_eff =
          cfg.method == config::Method::Rlmcmc ? 1.0 : cfg.rl.p_rl;
      for (int t = 0; t < cfg.rl.max_traj && !done(); ++t)
        for (int l = 0; l < n_agents && !done(); ++l) {
          rl::MixedProposal q(agents.get(), l, p_eff);
          bool moved = false;
          for (int r = 0; r < cfg.rl.retry_cap && !moved && !done(); ++r) {
            const field::GlobalState before = s;
            const mcmc::StepOutcome out = mcmc::mlmcmc_step(s, q, lspan, chain);
            ++steps;
            if (out.accepted) {
              agents->buffer().push(
                  before,
                  rl::reward(coarse0, before, out.next, cfg.rl.c1, cfg.rl.c2),
                  out.next);
              s = out.next;
              ++accepted;
              moved = true;
            }
            push_row(out.level_reached);
            if (cfg.audit_proposals)
              audit_step(q, before, out.proposal, cfg.allowed_actions,
                         grid.fine_n());
          }
          if (!moved) ++stalls;
          train_turn(l);
        }
    }
  } catch (...) {
    try {
      flush();
    } catch (...) {
      // the original error is the one worth reporting
    }
    throw;
  }

  flush();
  RunResult res;
  res.rows = std::move(rows);
  res.updates = std::move(update_rows);
  res.meta = fill_meta();
  return res;
}

}  // namespace chinv::run
