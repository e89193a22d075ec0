#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chinv::report {

/// Per-run digest: identification from the meta.json next to the trace,
/// threshold crossing recomputed from the trace rows themselves.
struct TraceSummary {
  std::string path;
  std::string experiment;
  std::string method;
  std::uint64_t seed = 0;
  long steps_total = 0;
  long accepted_total = 0;
  double final_misfit = 0;
  double threshold = 0;
  double wall_ms = 0;
  long steps_to_threshold = -1;     // first step index at/below threshold
  long accepted_to_threshold = -1;  // accepted count at that step
};

struct MethodAggregate {
  std::string method;
  int runs = 0;
  double median_accepted = 0;
  double median_final_misfit = 0;
  double median_wall_ms = 0;
  // +inf when the median run never crossed the threshold
  double median_steps_to_threshold = 0;
  double median_accepted_to_threshold = 0;
};

struct Comparison {
  std::string experiment;
  std::vector<TraceSummary> runs;
  std::vector<MethodAggregate> aggregates;  // method order of first appearance
};

double median(std::vector<double> v);

TraceSummary summarize_trace(const std::string& trace_path);

/// Requires at least two traces, all on the same experiment.
Comparison compare_traces(const std::vector<std::string>& trace_paths);

/// Text table with the published step counts quoted in the header for
/// orientation; those are never compared against.
std::string comparison_table(const Comparison& c);

void write_comparison_csv(const std::string& path, const Comparison& c);

/// Misfit-vs-accepted-steps overlay of the given traces.
void write_overlay_svg(const std::string& path,
                       const std::vector<std::string>& trace_paths);

}  // namespace chinv::report
