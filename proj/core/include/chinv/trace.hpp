#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chinv/field.hpp"

namespace chinv::trace {

/// One accepted-state row (plus the initial row at step 0). `step` counts
/// proposals since the start, `accepted_total` counts acceptances.
struct TraceRow {
  long step = 0;
  long accepted_total = 0;
  double misfit = 0;  // reference-level misfit of the current state
  int level_reached = 0;
  double wall_ms = 0;
  field::GlobalState state;
};

/// "x,y,w,d;x,y,w,d" with one group per channel.
std::string state_to_string(const field::GlobalState& s);
field::GlobalState state_from_string(const std::string& text);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace_csv(const std::string& path);

/// Per-update training scalars plus the policy distribution probed at a fixed
/// reference state of the updated agent.
struct RlUpdateRow {
  long update = 0;
  int agent = 0;
  double critic_loss = 0;
  double actor_loss = 0;
  std::vector<double> probe_probs;  // one per action, masked entries 0
};

void write_rl_updates_csv(const std::string& path,
                          const std::vector<RlUpdateRow>& rows);
std::vector<RlUpdateRow> read_rl_updates_csv(const std::string& path);

/// Sidecar facts for a run; wall time lives here so trace CSVs can stay
/// bit-stable.
struct RunMeta {
  std::string experiment;
  std::string method;
  std::uint64_t seed = 0;
  long steps_total = 0;
  long accepted_total = 0;
  double final_misfit = 0;
  double threshold = 0;
  double sigma_f = 0;  // resolved noise scale, after any auto rule
  long steps_to_threshold = -1;     // first proposal step at/below threshold
  long accepted_to_threshold = -1;  // accepted count at that step
  long stalls = 0;                  // agent turns that hit the retry cap
  long updates_total = 0;
  double wall_ms_total = 0;
  std::string final_state;
};

void write_meta_json(const std::string& path, const RunMeta& meta);
RunMeta read_meta_json(const std::string& path);

}  // namespace chinv::trace
