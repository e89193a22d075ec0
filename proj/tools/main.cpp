#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chinv/diagnostics.hpp"
#include "chinv/errors.hpp"
#include "chinv/experiment.hpp"
#include "chinv/report.hpp"
#include "chinv/run.hpp"

namespace fs = std::filesystem;
using namespace chinv;

namespace {

int cmd_run(const std::string& experiment, const std::string& method,
            bool method_set, std::uint64_t seed, bool seed_set,
            const std::string& config_path, const std::string& out_dir) {
  config::ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = config::load_config_file(config_path);
    if (!experiment.empty() && cfg.experiment != experiment)
      throw ConfigError("config file is for experiment '" + cfg.experiment +
                        "', not '" + experiment + "'");
  } else if (!experiment.empty()) {
    cfg = config::build_experiment(experiment);
  } else {
    throw ConfigError("run needs --experiment or --config");
  }
  if (method_set) cfg.method = config::method_from_name(method);
  if (seed_set) cfg.seed = seed;

  const run::RunResult res = run::run_experiment(cfg, out_dir);
  std::cout << cfg.experiment << " " << res.meta.method << " seed "
            << res.meta.seed << ": " << res.meta.steps_total << " proposals, "
            << res.meta.accepted_total << " accepted, final misfit "
            << res.meta.final_misfit << " (threshold " << res.meta.threshold
            << ", reached at step "
            << (res.meta.steps_to_threshold < 0
                    ? std::string("none")
                    : std::to_string(res.meta.steps_to_threshold))
            << "), " << res.meta.updates_total << " updates, "
            << res.meta.wall_ms_total / 1000.0 << " s\n";
  if (!out_dir.empty()) std::cout << "wrote " << out_dir << "\n";
  return 0;
}

int cmd_compare(const std::string& out_dir,
                const std::vector<std::string>& traces) {
  const report::Comparison c = report::compare_traces(traces);
  std::cout << report::comparison_table(c);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    report::write_comparison_csv((fs::path(out_dir) / "compare.csv").string(),
                                 c);
    report::write_overlay_svg((fs::path(out_dir) / "compare.svg").string(),
                              traces);
    std::cout << "wrote " << out_dir << "/compare.csv and compare.svg\n";
  }
  return 0;
}

int cmd_plot(const std::string& out_file,
             const std::vector<std::string>& traces) {
  report::write_overlay_svg(out_file, traces);
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

int cmd_gradcheck(int trials, std::uint64_t seed) {
  const double err = diag::gradcheck_max_rel_error(trials, seed);
  std::cout << "gradcheck: max relative error " << err << " over " << trials
            << " trials (tolerance 1e-4)\n";
  return err < 1e-4 ? 0 : 1;
}

int cmd_oracle_mh(long steps, std::uint64_t seed) {
  const diag::MhOracle r = diag::mh_stationarity_oracle(steps, seed);
  std::cout << "state  exact      empirical\n";
  for (std::size_t x = 0; x < r.exact.size(); ++x)
    std::cout << x << "      " << r.exact[x] << "   " << r.empirical[x] << "\n";
  std::cout << "oracle-mh: TV distance " << r.tv << " after " << r.steps
            << " steps (tolerance 0.05)\n";
  return r.tv < 0.05 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channelized-permeability Bayesian inversion driver"};
  app.require_subcommand(1);

  std::string experiment, method = "mcmc", config_path, out_dir;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "execute one chain");
  run_cmd->add_option("--experiment", experiment,
                      "canned experiment: exp1, exp2_onechannel, exp3_diagonal");
  run_cmd->add_option("--method", method, "mcmc, rlmcmc or erlmcmc");
  run_cmd->add_option("--seed", seed, "chain seed");
  run_cmd->add_option("--config", config_path, "config file (overrides --experiment)");
  run_cmd->add_option("--out", out_dir, "output directory");

  std::string cmp_out;
  std::vector<std::string> cmp_traces;
  auto* cmp_cmd = app.add_subcommand("compare", "tabulate runs of one experiment");
  cmp_cmd->add_option("--out", cmp_out, "directory for compare.csv and compare.svg");
  cmp_cmd->add_option("traces", cmp_traces, "trace.csv paths")->required();

  std::string plot_out = "plot.svg";
  std::vector<std::string> plot_traces;
  auto* plot_cmd = app.add_subcommand("plot", "misfit-vs-accepted-steps overlay");
  plot_cmd->add_option("--out", plot_out, "output SVG path");
  plot_cmd->add_option("traces", plot_traces, "trace.csv paths")->required();

  int gc_trials = 10;
  std::uint64_t gc_seed = 20240901;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "actor/critic gradients vs central finite differences");
  gc_cmd->add_option("--trials", gc_trials, "random nets/batches to test");
  gc_cmd->add_option("--seed", gc_seed, "rng seed");

  long mh_steps = 20000;
  std::uint64_t mh_seed = 7;
  auto* mh_cmd = app.add_subcommand(
      "oracle-mh", "chain occupancy vs enumerated 10-state posterior");
  mh_cmd->add_option("--steps", mh_steps, "chain length");
  mh_cmd->add_option("--seed", mh_seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed())
      return cmd_run(experiment, method, run_cmd->count("--method") > 0, seed,
                     run_cmd->count("--seed") > 0, config_path, out_dir);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_out, cmp_traces);
    if (plot_cmd->parsed()) return cmd_plot(plot_out, plot_traces);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_trials, gc_seed);
    if (mh_cmd->parsed()) return cmd_oracle_mh(mh_steps, mh_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
