#pragma once

#include <cstdint>
#include <vector>

namespace chinv::diag {

struct MhOracle {
  double tv = 0;                  // total variation, occupancy vs enumeration
  std::vector<double> exact;      // enumerated posterior over the 10 states
  std::vector<double> empirical;  // chain occupancy
  long steps = 0;
};

/// Stationarity check against a fully enumerable posterior: one unit-width
/// channel on a 10-column grid, shift-only moves, a single solver level.
/// The chain's occupancy must converge to the directly computed density.
MhOracle mh_stationarity_oracle(long steps = 20000, std::uint64_t seed = 7);

/// Worst relative disagreement between the analytic actor/critic batch-loss
/// gradients and central finite differences, over freshly randomized agent
/// bundles and replay batches.
double gradcheck_max_rel_error(int trials = 10, std::uint64_t seed = 20240901,
                               double fd_step = 1e-5);

}  // namespace chinv::diag
