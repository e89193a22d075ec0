#pragma once

#include <string>
#include <vector>

#include "chinv/config.hpp"
#include "chinv/trace.hpp"

namespace chinv::run {

struct RunResult {
  std::vector<trace::TraceRow> rows;
  std::vector<trace::RlUpdateRow> updates;
  trace::RunMeta meta;
};

/// Executes one configured chain to its step budget or misfit threshold and
/// returns the full trace. With a non-empty out_dir it also writes trace.csv,
/// meta.json, final_state.json, a config echo and (for RL methods)
/// rl_updates.csv plus network checkpoints; on a mid-run error the partial
/// trace is flushed before the error propagates. Deterministic per seed.
RunResult run_experiment(const config::ExperimentConfig& cfg,
                         const std::string& out_dir);

}  // namespace chinv::run
